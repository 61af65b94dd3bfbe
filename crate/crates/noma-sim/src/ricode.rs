//! Rate-1/2 rotationally invariant coding over QPSK.
//!
//! The code is a nonlinear convolutional code built from two stages: a
//! feedforward rate-1/2 encoder (taps 7,5 octal, memory 2) whose output
//! dibit is interpreted as a quadrant increment, followed by a running
//! quadrant accumulator whose value is emitted as a Gray-labelled dibit.
//! Rotating every transmitted symbol by a multiple of 90 degrees maps a
//! codeword onto the codeword produced by the *same* information sequence
//! from a different accumulator start value. The Viterbi decoder therefore
//! runs over the product trellis (4 convolutional states x 4 accumulator
//! values) with all 16 start states open, and recovers the information
//! bits regardless of the rotation. No pilot or reference symbol is spent.
//!
//! Very short blocks (fewer than ~4 symbols) do not carry enough context
//! to pin the accumulator and are inherently ambiguous without pilots;
//! practical frames here are tens of symbols.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

/// Errors from the coding/modulation layer.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RicodeError {
    /// A coded block must contain an even number of bits (one dibit per symbol).
    #[error("coded block length {0} is odd; expected one dibit per symbol")]
    OddCodedLength(usize),
}

// ---------------------------------------------------------------------------
// Bit blocks
// ---------------------------------------------------------------------------

/// Whether a bit block holds raw information bits or coded bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitRole {
    Info,
    Coded,
}

/// An ordered block of bits (values 0/1) for one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    bits: Vec<u8>,
    role: BitRole,
}

impl BitBlock {
    /// Wrap information bits. Panics if any value is not 0 or 1.
    pub fn info(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        Self { bits, role: BitRole::Info }
    }

    /// Wrap coded bits. Panics if any value is not 0 or 1.
    pub fn coded(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        Self { bits, role: BitRole::Coded }
    }

    pub fn role(&self) -> BitRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }
}

// ---------------------------------------------------------------------------
// QPSK constellation
// ---------------------------------------------------------------------------

/// Unit-energy QPSK points, one per quadrant, indexed counterclockwise
/// starting from the first quadrant: point q sits at angle pi/4 + q*pi/2.
pub const QPSK_POINTS: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Gray dibit label of each point: `QPSK_LABELS[q]` labels `QPSK_POINTS[q]`.
/// Adjacent quadrants differ in exactly one bit, so a 90-degree rotation of
/// the constellation is the fixed label permutation 00 -> 01 -> 11 -> 10 -> 00.
pub const QPSK_LABELS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

/// Gray dibit of a quadrant index.
#[inline]
pub const fn label_of_quadrant(q: u8) -> [u8; 2] {
    QPSK_LABELS[(q & 3) as usize]
}

/// Quadrant index of a Gray dibit.
#[inline]
pub const fn quadrant_of_label(b1: u8, b0: u8) -> u8 {
    // Inverse of q -> (q >> 1, (q >> 1) ^ (q & 1)).
    (b1 << 1) | (b1 ^ b0)
}

/// An M-ary constellation with its dibit labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: [Complex64; 4],
    pub labels: [[u8; 2]; 4],
}

impl Constellation {
    /// The QPSK constellation used throughout: unit average energy and
    /// closed under 90-degree rotation.
    pub fn qpsk() -> Self {
        Self { points: QPSK_POINTS, labels: QPSK_LABELS }
    }

    pub const fn order(&self) -> usize {
        4
    }
}

// ---------------------------------------------------------------------------
// I/Q frames
// ---------------------------------------------------------------------------

/// A frame of complex baseband symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame(pub Vec<Complex64>);

impl IqFrame {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }
}

impl std::ops::Deref for IqFrame {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Delay-element contents of the nonlinear encoder: two feedforward memory
/// bits plus the quadrant accumulator. Resets to all zero; the full state
/// space has 16 elements, which is what the decoder trellis enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncoderState {
    /// Convolutional memory, bit 1 = previous input, bit 0 = the one before.
    pub conv: u8,
    /// Accumulated quadrant (mod 4).
    pub acc: u8,
}

impl EncoderState {
    pub const COUNT: usize = 16;

    /// Conv-major state index in 0..16.
    #[inline]
    pub const fn index(self) -> usize {
        ((self.conv & 3) as usize) << 2 | (self.acc & 3) as usize
    }

    #[inline]
    pub const fn from_index(i: usize) -> Self {
        Self { conv: ((i >> 2) & 3) as u8, acc: (i & 3) as u8 }
    }
}

/// Feedforward taps, constraint length 3: G1 = 1 + D + D^2, G2 = 1 + D^2.
const CONV_G1: u8 = 0b111;
const CONV_G2: u8 = 0b101;

/// One encoder step: consume an input bit, return (next state, emitted quadrant).
#[inline]
const fn encoder_step(state: EncoderState, bit: u8) -> (EncoderState, u8) {
    let window = (bit << 2) | (state.conv & 3);
    let o1 = ((window & CONV_G1).count_ones() & 1) as u8;
    let o2 = ((window & CONV_G2).count_ones() & 1) as u8;
    let increment = quadrant_of_label(o1, o2);
    let acc = (state.acc + increment) & 3;
    let conv = ((bit << 1) | (state.conv >> 1)) & 3;
    (EncoderState { conv, acc }, acc)
}

/// Per-state transition table: `TRELLIS_NEXT[s][b]` is the successor index of
/// state `s` on input bit `b`; the emitted quadrant is the successor's `acc`.
const TRELLIS_NEXT: [[u8; 2]; EncoderState::COUNT] = {
    let mut t = [[0u8; 2]; EncoderState::COUNT];
    let mut s = 0;
    while s < EncoderState::COUNT {
        let mut b = 0;
        while b < 2 {
            let (ns, _) = encoder_step(EncoderState::from_index(s), b as u8);
            t[s][b] = ns.index() as u8;
            b += 1;
        }
        s += 1;
    }
    t
};

/// Predecessors of each state: exactly two, both reached by the same input
/// bit (the successor's top conv bit), listed with the smaller conv first.
const TRELLIS_PREV: [[u8; 2]; EncoderState::COUNT] = {
    let mut p = [[0u8; 2]; EncoderState::COUNT];
    let mut filled = [0usize; EncoderState::COUNT];
    let mut s = 0;
    while s < EncoderState::COUNT {
        let mut b = 0;
        while b < 2 {
            let ns = TRELLIS_NEXT[s][b] as usize;
            p[ns][filled[ns]] = s as u8;
            filled[ns] += 1;
            b += 1;
        }
        s += 1;
    }
    // Conv-major indices already order by conv; sort each pair.
    let mut i = 0;
    while i < EncoderState::COUNT {
        if p[i][0] > p[i][1] {
            let tmp = p[i][0];
            p[i][0] = p[i][1];
            p[i][1] = tmp;
        }
        i += 1;
    }
    p
};

/// Hamming distance between the Gray labels of two quadrants depends only on
/// their difference mod 4: 0, 1, 2, 1.
const HAM_DELTA: [u32; 4] = [0, 1, 2, 1];

/// Encode an information block starting from the all-zero state.
///
/// Output length is exactly twice the input length (rate 1/2); the output
/// bits are the Gray labels of the accumulated quadrants, ready for
/// memoryless QPSK mapping.
pub fn encode(info: &BitBlock) -> BitBlock {
    encode_from_state(info.as_slice(), EncoderState::default()).0
}

/// Encode from an explicit starting state; returns the coded block and the
/// final state. Used by the decoder-side reconstruction and by tests.
pub fn encode_from_state(info: &[u8], mut state: EncoderState) -> (BitBlock, EncoderState) {
    let mut coded = Vec::with_capacity(info.len() * 2);
    for &bit in info {
        let (next, quadrant) = encoder_step(state, bit);
        let label = label_of_quadrant(quadrant);
        coded.push(label[0]);
        coded.push(label[1]);
        state = next;
    }
    (BitBlock::coded(coded), state)
}

// ---------------------------------------------------------------------------
// Modulation
// ---------------------------------------------------------------------------

/// Map a coded block to QPSK symbols, one symbol per dibit.
pub fn modulate(coded: &BitBlock, c: &Constellation) -> Result<IqFrame, RicodeError> {
    if coded.len() % 2 != 0 {
        return Err(RicodeError::OddCodedLength(coded.len()));
    }
    let symbols = coded
        .as_slice()
        .chunks_exact(2)
        .map(|d| c.points[quadrant_of_label(d[0], d[1]) as usize])
        .collect();
    Ok(IqFrame(symbols))
}

/// Map a sequence of quadrant indices to QPSK symbols.
pub fn modulate_quadrants(quadrants: &[u8], c: &Constellation) -> IqFrame {
    IqFrame(quadrants.iter().map(|&q| c.points[(q & 3) as usize]).collect())
}

/// Rotate every symbol by `quarter_turns` * 90 degrees counterclockwise.
///
/// Implemented as component swap/negation, which is the exact product with
/// e^(j*pi/2) in floating point; rotate(., 0) is the identity and rotations
/// compose additively mod 4.
pub fn rotate(frame: &IqFrame, quarter_turns: u8) -> IqFrame {
    let f = |z: &Complex64| -> Complex64 {
        match quarter_turns & 3 {
            0 => *z,
            1 => Complex64::new(-z.im, z.re),
            2 => Complex64::new(-z.re, -z.im),
            _ => Complex64::new(z.im, -z.re),
        }
    };
    IqFrame(frame.iter().map(f).collect())
}

/// Quadrant decision for one received symbol: nearest constellation point,
/// ties (a coordinate exactly on a boundary) resolved toward the smallest
/// point index.
#[inline]
fn slice_quadrant(z: Complex64) -> u8 {
    if z.re != 0.0 && z.im != 0.0 {
        match (z.re > 0.0, z.im > 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        }
    } else {
        // Boundary: fall back to explicit nearest-point search.
        let mut best = 0u8;
        let mut best_d = f64::INFINITY;
        for (q, p) in QPSK_POINTS.iter().enumerate() {
            let dr = z.re - p.re;
            let di = z.im - p.im;
            let d = dr * dr + di * di;
            if d < best_d {
                best_d = d;
                best = q as u8;
            }
        }
        best
    }
}

/// Hard-decision demodulation with decision boundaries rotated by `theta`:
/// each symbol is derotated by e^(-j*theta) and quadrant-sliced.
pub fn demodulate(frame: &IqFrame, theta: f64, c: &Constellation) -> BitBlock {
    let mut bits = Vec::with_capacity(frame.len() * 2);
    let rot = Complex64::from_polar(1.0, -theta);
    for z in frame.iter() {
        let w = if theta == 0.0 { *z } else { z * rot };
        let label = c.labels[slice_quadrant(w) as usize];
        bits.push(label[0]);
        bits.push(label[1]);
    }
    BitBlock::coded(bits)
}

/// Quadrant decisions (rather than bit labels) for a frame; same slicing rule.
pub fn demodulate_quadrants(frame: &IqFrame, theta: f64) -> Vec<u8> {
    let rot = Complex64::from_polar(1.0, -theta);
    frame
        .iter()
        .map(|z| slice_quadrant(if theta == 0.0 { *z } else { z * rot }))
        .collect()
}

// ---------------------------------------------------------------------------
// Viterbi decoder
// ---------------------------------------------------------------------------

/// Full decoder output: the information bits plus the winning trellis path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViterbiDecode {
    /// Decoded information bits.
    pub info: BitBlock,
    /// Start state of the winning path (the accumulator component absorbs
    /// any constellation rotation).
    pub initial_state: EncoderState,
    /// Quadrants emitted along the winning path; re-modulating these yields
    /// the error-corrected codeword as it appeared on the channel.
    pub path_quadrants: Vec<u8>,
    /// Hamming metric of the winning path against the input dibits.
    pub metric: u32,
}

/// Hard-decision Viterbi decoding over the 16-state product trellis.
///
/// All start states carry zero initial metric (the frame is pilot-free, so
/// the accumulator start is unknown by design) and the traceback starts
/// from the best end state. Survivor ties resolve toward the smaller
/// predecessor state index; end-state ties are resolved by decoding every
/// tied state and keeping the candidate with the lexicographically smallest
/// information sequence (then smallest observed-minus-path quadrant
/// difference sequence), which makes the result independent of any global
/// constellation rotation of the input.
pub fn viterbi_decode_full(coded_hard: &BitBlock) -> ViterbiDecode {
    let bits = coded_hard.as_slice();
    assert!(bits.len() % 2 == 0, "coded block length must be even");
    let n = bits.len() / 2;
    let observed: Vec<u8> = bits
        .chunks_exact(2)
        .map(|d| quadrant_of_label(d[0], d[1]))
        .collect();

    let mut metric = [0u32; EncoderState::COUNT];
    let mut prev = vec![[0u8; EncoderState::COUNT]; n];

    for (step, &obs) in observed.iter().enumerate() {
        let mut next = [u32::MAX; EncoderState::COUNT];
        for ns in 0..EncoderState::COUNT {
            let branch = HAM_DELTA[((ns as u8 & 3).wrapping_sub(obs) & 3) as usize];
            let pa = TRELLIS_PREV[ns][0] as usize;
            let pb = TRELLIS_PREV[ns][1] as usize;
            // Strict < keeps pa on ties: predecessors are stored with the
            // smaller conv-major index first.
            let (p, m) = if metric[pb] < metric[pa] { (pb, metric[pb]) } else { (pa, metric[pa]) };
            next[ns] = m + branch;
            prev[step][ns] = p as u8;
        }
        metric = next;
    }

    let best_metric = *metric.iter().min().expect("state space is non-empty");

    // Decode every end state that attains the best metric and pick the
    // canonical candidate.
    let mut best: Option<(Vec<u8>, Vec<u8>, EncoderState, Vec<u8>)> = None;
    for end in 0..EncoderState::COUNT {
        if metric[end] != best_metric {
            continue;
        }
        let mut states = vec![0u8; n + 1];
        states[n] = end as u8;
        for step in (0..n).rev() {
            states[step] = prev[step][states[step + 1] as usize];
        }
        let info: Vec<u8> = states[1..].iter().map(|&s| (s >> 3) & 1).collect();
        let quadrants: Vec<u8> = states[1..].iter().map(|&s| s & 3).collect();
        let deltas: Vec<u8> = observed
            .iter()
            .zip(&quadrants)
            .map(|(&o, &q)| o.wrapping_sub(q) & 3)
            .collect();
        let initial = EncoderState::from_index(states[0] as usize);
        let key = (info, deltas);
        match &best {
            Some((bi, bd, _, _)) if (&key.0, &key.1) >= (bi, bd) => {}
            _ => best = Some((key.0, key.1, initial, quadrants)),
        }
    }
    let (info, _, initial_state, path_quadrants) = best.expect("at least one end state");

    ViterbiDecode {
        info: BitBlock::info(info),
        initial_state,
        path_quadrants,
        metric: best_metric,
    }
}

/// Minimum-Hamming-distance decoding of a hard-decision coded block.
pub fn viterbi_decode(coded_hard: &BitBlock) -> BitBlock {
    viterbi_decode_full(coded_hard).info
}
