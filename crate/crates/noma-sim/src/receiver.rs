//! Receivers: the pilot-free clustering SIC detector and its baselines.
//!
//! The blind detector peels users strongest-first. Each stage fits four
//! clusters to the current residual, reads the channel amplitude off the
//! centroid magnitudes and a phase representative off the centroid angles
//! folded modulo 90 degrees, slices with the rotated boundaries, decodes
//! the invariant code, and subtracts the re-modulated codeword scaled by
//! the estimate. The quarter-turn ambiguity left in the phase estimate is
//! absorbed by the code, so no input beyond the received frame is used.
//!
//! Baselines: joint maximum-likelihood detection with full channel
//! knowledge (exhaustive over all composite constellation points), and the
//! same detector fed with least-squares channel estimates from a block of
//! time-orthogonal training symbols.

use crate::channel::ChannelRealization;
use crate::clustering::{self, ClusteringError, GmmState, PointSet};
use crate::ricode::{
    self, BitBlock, Constellation, IqFrame, QPSK_POINTS,
};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReceiverError {
    #[error("cluster centroid {component} sits at the origin; phase undefined")]
    CentroidAtOrigin { component: usize },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error("at least one pilot symbol per user is required")]
    EmptyPilots,
    #[error("received frame ({got} symbols) shorter than the pilot block ({need})")]
    PilotFrameTooShort { got: usize, need: usize },
}

/// Clustering backend for the blind detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterBackend {
    /// Full-covariance Gaussian mixture fitted by EM.
    Gmm,
    /// Plain K-means (every cluster implicitly shares one isotropic spread).
    Kmeans,
}

/// Blind per-user channel estimate: a non-negative amplitude and a phase
/// representative in [-pi/4, pi/4). The four-fold constellation symmetry
/// makes the remaining quarter-turn irreducible at this point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub amplitude: f64,
    pub theta: f64,
}

/// Outcome for one user within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDetection {
    /// Decoded information bits; `None` when the stage failed and the user
    /// must be counted as fully errored.
    pub bits: Option<BitBlock>,
    /// The stage's channel estimate (blind stages only).
    pub estimate: Option<ChannelEstimate>,
    /// Energy of the residual frame after this user was cancelled.
    pub residual_energy: f64,
}

/// Per-frame detector output, users in detection order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub users: Vec<UserDetection>,
}

fn frame_energy(f: &IqFrame) -> f64 {
    f.iter().map(|z| z.norm_sqr()).sum()
}

// ---------------------------------------------------------------------------
// Channel estimation from cluster centroids
// ---------------------------------------------------------------------------

/// Amplitude and folded phase from four cluster centroids.
///
/// The centroids of a QPSK stage sit at amplitude * e^(j(theta + pi/4 +
/// k*pi/2)); the estimator averages |mu_i| for the amplitude and takes the
/// circular mean of the centroid phases folded modulo pi/2 (after removing
/// the pi/4 constellation offset) for theta. The fold is computed through
/// the fourth power of each centroid, which keeps the estimate exactly
/// invariant when the whole point cloud is rotated by a quarter turn.
pub fn estimate_channel_from_centroids(
    centroids: &[[f64; 2]],
) -> Result<ChannelEstimate, ReceiverError> {
    assert_eq!(centroids.len(), 4, "QPSK stage expects 4 centroids");
    let mut amplitude = 0.0;
    let mut sum = Complex64::new(0.0, 0.0);
    for (j, c) in centroids.iter().enumerate() {
        let mu = Complex64::new(c[0], c[1]);
        let norm = mu.norm();
        if !(norm > 1e-12) {
            return Err(ReceiverError::CentroidAtOrigin { component: j });
        }
        amplitude += norm;
        // e^(j(4 phi - pi)) = -(mu/|mu|)^4, via two exact complex squarings.
        let m2 = mu * mu;
        let m4 = m2 * m2;
        let n4 = m4.norm();
        sum += Complex64::new(-m4.re / n4, -m4.im / n4);
    }
    amplitude /= 4.0;
    let mut theta = sum.im.atan2(sum.re) / 4.0;
    if theta >= FRAC_PI_4 {
        theta -= FRAC_PI_2;
    }
    Ok(ChannelEstimate { amplitude, theta })
}

/// Channel estimate from a fitted mixture (the stage's cluster centroids).
pub fn estimate_channel_from_clusters(g: &GmmState) -> Result<ChannelEstimate, ReceiverError> {
    estimate_channel_from_centroids(&g.means)
}

// ---------------------------------------------------------------------------
// Blind SIC detection
// ---------------------------------------------------------------------------

/// EM sweep cap used by the detector's mixture fits.
const GMM_MAX_ITER: usize = 100;
/// Lloyd round cap for the K-means backend.
const KMEANS_MAX_ITER: usize = 100;

struct Stage {
    bits: BitBlock,
    estimate: ChannelEstimate,
    reconstruction: IqFrame,
}

fn detect_stage(
    residual: &IqFrame,
    eps: f64,
    backend: ClusterBackend,
    c: &Constellation,
    rng: &mut impl Rng,
) -> Result<Stage, ReceiverError> {
    let ps = PointSet::from_iq(residual);
    let estimate = match backend {
        ClusterBackend::Gmm => {
            let g = clustering::gmm_fit(&ps, 4, eps, GMM_MAX_ITER, rng)?;
            estimate_channel_from_clusters(&g)?
        }
        ClusterBackend::Kmeans => {
            let km = clustering::kmeans_cluster(&ps, 4, KMEANS_MAX_ITER, rng)?;
            estimate_channel_from_centroids(&km.centroids)?
        }
    };

    let quadrants = ricode::demodulate_quadrants(residual, estimate.theta);
    let labels: Vec<u8> = quadrants
        .iter()
        .flat_map(|&q| ricode::label_of_quadrant(q))
        .collect();
    let decode = ricode::viterbi_decode_full(&BitBlock::coded(labels));

    // Re-modulate the winning path (which already carries the observed
    // quarter-turn) and scale by the estimated channel.
    let gain = Complex64::from_polar(estimate.amplitude, estimate.theta);
    let clean = ricode::modulate_quadrants(&decode.path_quadrants, c);
    let reconstruction = IqFrame(clean.iter().map(|z| gain * z).collect());

    Ok(Stage { bits: decode.info, estimate, reconstruction })
}

/// Joint channel estimation and detection for `users` superimposed frames.
///
/// The only observation consumed is `y`; stages run strongest-remaining
/// first because each mixture fit locks onto the dominant user, the weaker
/// ones acting as inflated cluster spread. A failed stage (degenerate
/// clustering or an undefined centroid phase) marks this and all remaining
/// users as errored and detection of the frame stops.
pub fn jcesd_detect(
    y: &IqFrame,
    users: usize,
    eps: f64,
    backend: ClusterBackend,
    rng: &mut impl Rng,
) -> DetectionResult {
    assert!(users >= 1, "at least one user");
    let c = Constellation::qpsk();
    let mut residual = y.clone();
    let mut out = Vec::with_capacity(users);
    let mut dead = false;
    for _ in 0..users {
        if dead {
            out.push(UserDetection {
                bits: None,
                estimate: None,
                residual_energy: frame_energy(&residual),
            });
            continue;
        }
        match detect_stage(&residual, eps, backend, &c, rng) {
            Ok(stage) => {
                let next: Vec<Complex64> = residual
                    .iter()
                    .zip(stage.reconstruction.iter())
                    .map(|(y, r)| y - r)
                    .collect();
                residual = IqFrame(next);
                out.push(UserDetection {
                    bits: Some(stage.bits),
                    estimate: Some(stage.estimate),
                    residual_energy: frame_energy(&residual),
                });
            }
            Err(_) => {
                dead = true;
                out.push(UserDetection {
                    bits: None,
                    estimate: None,
                    residual_energy: frame_energy(&residual),
                });
            }
        }
    }
    DetectionResult { users: out }
}

/// Subtract one user's re-encoded contribution: y - |h| e^(j theta) *
/// modulate(encode(bits)).
pub fn sic_cancel(y: &IqFrame, bits: &BitBlock, est: &ChannelEstimate) -> IqFrame {
    let c = Constellation::qpsk();
    let coded = ricode::encode(bits);
    let x = ricode::modulate(&coded, &c).expect("encode output has even length");
    let gain = Complex64::from_polar(est.amplitude, est.theta);
    IqFrame(y.iter().zip(x.iter()).map(|(yi, xi)| yi - gain * xi).collect())
}

// ---------------------------------------------------------------------------
// ML baselines
// ---------------------------------------------------------------------------

/// All M^K composite points sum_u h_u s_{c_u}, indexed user-0-major.
fn composite_points(gains: &[Complex64]) -> Vec<Complex64> {
    let k = gains.len();
    let total = 4usize.pow(k as u32);
    let mut points = Vec::with_capacity(total);
    for c in 0..total {
        let mut p = Complex64::new(0.0, 0.0);
        for (u, h) in gains.iter().enumerate() {
            let digit = (c >> (2 * (k - 1 - u))) & 3;
            p += h * QPSK_POINTS[digit];
        }
        points.push(p);
    }
    points
}

/// Optimal joint detection with known channel: per symbol, pick the
/// composite point minimizing |y_i - sum_u h_u s_u|^2 over all M^K
/// combinations (ties toward the smallest composite index), then decode
///每 user's hard dibits.
pub fn ml_full_csi_detect(y: &IqFrame, ch: &ChannelRealization) -> DetectionResult {
    let k = ch.users();
    let composites = composite_points(&ch.gains);
    let c = Constellation::qpsk();

    let mut per_user_quadrants = vec![Vec::with_capacity(y.len()); k];
    for &yi in y.iter() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in composites.iter().enumerate() {
            let d = (yi - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        for u in 0..k {
            per_user_quadrants[u].push(((best >> (2 * (k - 1 - u))) & 3) as u8);
        }
    }

    let mut residual: Vec<Complex64> = y.as_slice().to_vec();
    let mut users = Vec::with_capacity(k);
    for u in 0..k {
        let labels: Vec<u8> = per_user_quadrants[u]
            .iter()
            .flat_map(|&q| ricode::label_of_quadrant(q))
            .collect();
        let decode = ricode::viterbi_decode_full(&BitBlock::coded(labels));
        let clean = ricode::modulate_quadrants(&decode.path_quadrants, &c);
        for (r, x) in residual.iter_mut().zip(clean.iter()) {
            *r -= ch.gains[u] * x;
        }
        users.push(UserDetection {
            bits: Some(decode.info),
            estimate: None,
            residual_energy: residual.iter().map(|z| z.norm_sqr()).sum(),
        });
    }
    DetectionResult { users }
}

/// Pilot-assisted ML: the first K*P slots of `y` carry training symbols,
/// time-orthogonal across users (user u transmits alone in slots
/// [u*P, (u+1)*P)), followed by the payload. Gains are least-squares
/// estimates from each user's own slots; detection is then
/// [`ml_full_csi_detect`] with the estimates in place of the true gains.
pub fn pilot_ml_detect(y: &IqFrame, pilots: &[IqFrame]) -> Result<DetectionResult, ReceiverError> {
    let k = pilots.len();
    if k == 0 || pilots.iter().any(|p| p.is_empty()) {
        return Err(ReceiverError::EmptyPilots);
    }
    let p = pilots[0].len();
    assert!(pilots.iter().all(|b| b.len() == p), "equal pilot block lengths");
    let need = k * p;
    if y.len() < need {
        return Err(ReceiverError::PilotFrameTooShort { got: y.len(), need });
    }

    let mut gains = Vec::with_capacity(k);
    for (u, block) in pilots.iter().enumerate() {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for (i, pi) in block.iter().enumerate() {
            num += y[u * p + i] * pi.conj();
            den += pi.norm_sqr();
        }
        gains.push(num / den);
    }

    let payload = IqFrame(y[need..].to_vec());
    let est = ChannelRealization { gains, noise_power: 0.0 };
    Ok(ml_full_csi_detect(&payload, &est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize_channel, transmit, SnrSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..=1u8)).collect()
    }

    fn qpsk_centroids(amplitude: f64, theta: f64) -> Vec<[f64; 2]> {
        (0..4)
            .map(|q| {
                let phi = theta + FRAC_PI_4 + q as f64 * FRAC_PI_2;
                [amplitude * phi.cos(), amplitude * phi.sin()]
            })
            .collect()
    }

    #[test]
    fn estimator_inverts_exact_centroids() {
        let est = estimate_channel_from_centroids(&qpsk_centroids(2.0, 0.3)).unwrap();
        assert!((est.amplitude - 2.0).abs() < 1e-12);
        assert!((est.theta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn estimator_zero_phase() {
        let est = estimate_channel_from_centroids(&qpsk_centroids(1.0, 0.0)).unwrap();
        assert!(est.theta.abs() < 1e-12);
    }

    #[test]
    fn estimator_folds_out_of_range_phase() {
        // True phase 2.0 rad; representative must be 2.0 - pi/2 in range.
        let est = estimate_channel_from_centroids(&qpsk_centroids(1.5, 2.0 - FRAC_PI_2)).unwrap();
        let est2 = estimate_channel_from_centroids(&qpsk_centroids(1.5, 2.0)).unwrap();
        assert!((est.theta - (2.0 - FRAC_PI_2)).abs() < 1e-12);
        assert!((est2.theta - (2.0 - FRAC_PI_2)).abs() < 1e-12);
        assert!(est2.theta >= -FRAC_PI_4 && est2.theta < FRAC_PI_4);
    }

    #[test]
    fn estimator_rejects_origin_centroid() {
        let mut c = qpsk_centroids(1.0, 0.1);
        c[2] = [0.0, 0.0];
        assert_eq!(
            estimate_channel_from_centroids(&c).unwrap_err(),
            ReceiverError::CentroidAtOrigin { component: 2 }
        );
    }

    #[test]
    fn estimator_perturbation_study() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let amplitude = 2.0;
        let theta = 0.19;
        let sigma = 0.01 * amplitude;
        let mut within = 0usize;
        for _ in 0..1000 {
            let noisy: Vec<[f64; 2]> = qpsk_centroids(amplitude, theta)
                .into_iter()
                .map(|c| {
                    [
                        c[0] + sigma * StandardNormal.sample(&mut rng),
                        c[1] + sigma * StandardNormal.sample(&mut rng),
                    ]
                })
                .collect();
            let est = estimate_channel_from_centroids(&noisy).unwrap();
            if (est.theta - theta).abs() < 0.02 {
                within += 1;
            }
        }
        assert!(within >= 999, "only {within}/1000 within 0.02 rad");
    }

    #[test]
    fn jcesd_single_user_noiseless_any_phase() {
        let c = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for trial in 0..50 {
            let info = BitBlock::info(random_bits(&mut rng, 50));
            let x = ricode::modulate(&ricode::encode(&info), &c).unwrap();
            let h = Complex64::from_polar(1.3, rng.random::<f64>() * 2.0 * PI);
            let y = IqFrame(x.iter().map(|z| h * z).collect());
            let det = jcesd_detect(&y, 1, 1e-6 * 50.0, ClusterBackend::Gmm, &mut rng);
            assert_eq!(det.users[0].bits.as_ref().unwrap(), &info, "trial {trial}");
            // Near-perfect cancellation of the only user.
            assert!(det.users[0].residual_energy < 1e-12);
        }
    }

    #[test]
    fn sic_cancel_exact_single_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let info = BitBlock::info(random_bits(&mut rng, 50));
        let c = Constellation::qpsk();
        let x = ricode::modulate(&ricode::encode(&info), &c).unwrap();
        let theta = 0.21;
        let amplitude = 1.7;
        let h = Complex64::from_polar(amplitude, theta);
        let y = IqFrame(x.iter().map(|z| h * z).collect());
        let res = sic_cancel(&y, &info, &ChannelEstimate { amplitude, theta });
        assert_eq!(frame_energy(&res), 0.0);
    }

    #[test]
    fn sic_cancel_leaves_second_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let c = Constellation::qpsk();
        let b1 = BitBlock::info(random_bits(&mut rng, 50));
        let b2 = BitBlock::info(random_bits(&mut rng, 50));
        let x1 = ricode::modulate(&ricode::encode(&b1), &c).unwrap();
        let x2 = ricode::modulate(&ricode::encode(&b2), &c).unwrap();
        let h1 = Complex64::from_polar(2.0, 0.11);
        let h2 = Complex64::from_polar(0.7, -0.52);
        let y = IqFrame(
            x1.iter()
                .zip(x2.iter())
                .map(|(a, b)| h1 * a + h2 * b)
                .collect(),
        );
        let res = sic_cancel(&y, &b1, &ChannelEstimate { amplitude: 2.0, theta: 0.11 });
        for (r, x) in res.iter().zip(x2.iter()) {
            assert!((r - h2 * x).norm() < 1e-15);
        }
    }

    #[test]
    fn sic_cancel_amplitude_error_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let c = Constellation::qpsk();
        let info = BitBlock::info(random_bits(&mut rng, 50));
        let x = ricode::modulate(&ricode::encode(&info), &c).unwrap();
        let theta = -0.3;
        let amplitude = 1.0;
        let delta = 0.05;
        let h = Complex64::from_polar(amplitude, theta);
        let y = IqFrame(x.iter().map(|z| h * z).collect());
        let res = sic_cancel(&y, &info, &ChannelEstimate { amplitude: amplitude + delta, theta });
        // Residual is -delta e^(j theta) x: energy = delta^2 * N * E|x|^2.
        let expect = delta * delta * 50.0;
        assert!((frame_energy(&res) - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn ml_matches_independent_enumerator() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for &k in &[2usize, 3] {
            let gains: Vec<Complex64> = (0..k)
                .map(|u| Complex64::from_polar(2.0_f64.powi(-(u as i32)), rng.random::<f64>() * 2.0 * PI))
                .collect();
            assert_eq!(composite_points(&gains).len(), 4usize.pow(k as u32));
            let y = IqFrame(
                (0..64)
                    .map(|_| {
                        Complex64::new(
                            3.0 * (rng.random::<f64>() - 0.5),
                            3.0 * (rng.random::<f64>() - 0.5),
                        )
                    })
                    .collect(),
            );
            // Independent nested-loop enumerator for the per-symbol decision.
            let oracle: Vec<Vec<u8>> = y
                .iter()
                .map(|&yi| {
                    let mut best = vec![0u8; k];
                    let mut best_d = f64::INFINITY;
                    let mut digits = vec![0u8; k];
                    loop {
                        let mut p = Complex64::new(0.0, 0.0);
                        for u in 0..k {
                            p += gains[u] * QPSK_POINTS[digits[u] as usize];
                        }
                        let d = (yi - p).norm_sqr();
                        if d < best_d {
                            best_d = d;
                            best = digits.clone();
                        }
                        // Increment the digit vector, user-0-major.
                        let mut pos = k;
                        loop {
                            if pos == 0 {
                                break;
                            }
                            pos -= 1;
                            digits[pos] += 1;
                            if digits[pos] < 4 {
                                break;
                            }
                            digits[pos] = 0;
                        }
                        if digits.iter().all(|&d| d == 0) {
                            break;
                        }
                    }
                    best
                })
                .collect();

            let composites = composite_points(&gains);
            for (i, &yi) in y.iter().enumerate() {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (idx, p) in composites.iter().enumerate() {
                    let d = (yi - p).norm_sqr();
                    if d < best_d {
                        best_d = d;
                        best = idx;
                    }
                }
                for u in 0..k {
                    let got = ((best >> (2 * (k - 1 - u))) & 3) as u8;
                    assert_eq!(got, oracle[i][u], "symbol {i} user {u} K={k}");
                }
            }
        }
    }

    #[test]
    fn ml_full_csi_exact_recovery_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let c = Constellation::qpsk();
        let b1 = BitBlock::info(random_bits(&mut rng, 50));
        let b2 = BitBlock::info(random_bits(&mut rng, 50));
        let x1 = ricode::modulate(&ricode::encode(&b1), &c).unwrap();
        let x2 = ricode::modulate(&ricode::encode(&b2), &c).unwrap();
        let ch = ChannelRealization {
            gains: vec![
                Complex64::from_polar(2.8, 0.4),
                Complex64::from_polar(1.0, -1.9),
            ],
            noise_power: 0.0,
        };
        let y = IqFrame(
            x1.iter()
                .zip(x2.iter())
                .map(|(a, b)| ch.gains[0] * a + ch.gains[1] * b)
                .collect(),
        );
        let det = ml_full_csi_detect(&y, &ch);
        assert_eq!(det.users[0].bits.as_ref().unwrap(), &b1);
        assert_eq!(det.users[1].bits.as_ref().unwrap(), &b2);
        assert!(det.users[1].residual_energy < 1e-20);
    }

    #[test]
    fn pilot_ls_exact_when_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let c = Constellation::qpsk();
        let k = 2;
        let p = 4;
        let pilots: Vec<IqFrame> = (0..k).map(|_| IqFrame(vec![QPSK_POINTS[0]; p])).collect();
        let gains = vec![
            Complex64::from_polar(2.0, 1.1),
            Complex64::from_polar(0.8, -2.3),
        ];
        let payload_bits: Vec<BitBlock> =
            (0..k).map(|_| BitBlock::info(random_bits(&mut rng, 50))).collect();
        let payload: Vec<IqFrame> = payload_bits
            .iter()
            .map(|b| ricode::modulate(&ricode::encode(b), &c).unwrap())
            .collect();

        let mut y = Vec::new();
        for u in 0..k {
            for i in 0..p {
                y.push(gains[u] * pilots[u][i]);
            }
        }
        for i in 0..50 {
            y.push(gains[0] * payload[0][i] + gains[1] * payload[1][i]);
        }
        let det = pilot_ml_detect(&IqFrame(y), &pilots).unwrap();
        for u in 0..k {
            assert_eq!(det.users[u].bits.as_ref().unwrap(), &payload_bits[u]);
        }
    }

    #[test]
    fn pilot_rejects_bad_inputs() {
        assert_eq!(
            pilot_ml_detect(&IqFrame(vec![]), &[]).unwrap_err(),
            ReceiverError::EmptyPilots
        );
        let pilots = vec![IqFrame(vec![QPSK_POINTS[0]; 4])];
        assert_eq!(
            pilot_ml_detect(&IqFrame(vec![QPSK_POINTS[0]; 2]), &pilots).unwrap_err(),
            ReceiverError::PilotFrameTooShort { got: 2, need: 4 }
        );
    }

    #[test]
    fn detection_order_follows_power() {
        // 9 dB gap at healthy SNR: the first stage should lock onto the
        // stronger user nearly always.
        let c = Constellation::qpsk();
        let spec = SnrSpec::fixed_snr(vec![14.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut ordered = 0usize;
        let frames = 200;
        for _ in 0..frames {
            let bits: Vec<BitBlock> =
                (0..2).map(|_| BitBlock::info(random_bits(&mut rng, 50))).collect();
            let x: Vec<IqFrame> = bits
                .iter()
                .map(|b| ricode::modulate(&ricode::encode(b), &c).unwrap())
                .collect();
            let ch = realize_channel(&spec, &mut rng).unwrap();
            let y = transmit(&x, &ch, &mut rng).unwrap();
            let det = jcesd_detect(&y, 2, 1e-6 * 50.0, ClusterBackend::Gmm, &mut rng);
            let a1 = det.users[0].estimate.map(|e| e.amplitude).unwrap_or(0.0);
            let a2 = det.users[1].estimate.map(|e| e.amplitude).unwrap_or(0.0);
            if a1 >= a2 {
                ordered += 1;
            }
        }
        assert!(ordered * 100 >= frames * 99, "ordered {ordered}/{frames}");
    }

    #[test]
    fn phase_quarter_turns_leave_bits_unchanged() {
        // Rotating the received frame by quarter turns (channel phase and
        // noise together) must reproduce identical decoded bits.
        let c = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..50 {
            let bits: Vec<BitBlock> =
                (0..2).map(|_| BitBlock::info(random_bits(&mut rng, 50))).collect();
            let x: Vec<IqFrame> = bits
                .iter()
                .map(|b| ricode::modulate(&ricode::encode(b), &c).unwrap())
                .collect();
            let spec = SnrSpec::fixed_snr(vec![15.0, 6.0]);
            let ch = realize_channel(&spec, &mut rng).unwrap();
            let y = transmit(&x, &ch, &mut rng).unwrap();

            let detector_seed = rng.random::<u64>();
            let run = |frame: &IqFrame| {
                let mut det_rng = ChaCha8Rng::seed_from_u64(detector_seed);
                jcesd_detect(frame, 2, 1e-6 * 50.0, ClusterBackend::Gmm, &mut det_rng)
            };
            let base = run(&y);
            for r in 1..4u8 {
                let rot = run(&ricode::rotate(&y, r));
                for u in 0..2 {
                    assert_eq!(rot.users[u].bits, base.users[u].bits, "rotation {r} user {u}");
                }
            }
        }
    }
}
