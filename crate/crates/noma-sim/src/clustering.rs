//! Unsupervised 2-D clustering of received I/Q samples: a few Lloyd
//! iterations of K-means to initialize, then a full-covariance Gaussian
//! mixture fitted by expectation-maximization.
//!
//! Mixture weights stay pinned at 1/M by default (all constellation points
//! are equally likely); the weight update is available behind a flag. Each
//! E step costs O(M N d^3) for the 2x2 determinant/inverse work and each
//! M step O(M N d), i.e. O(t M d^3) per sample for a fit that converges in
//! t sweeps.
//!
//! All reductions run in a fixed order so that fits are bit-reproducible,
//! and symmetric terms are grouped so that a 90-degree rotation of the
//! input point set yields the exactly rotated fit.

use crate::ricode::IqFrame;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("need at least {components} points to fit {components} clusters, got {points}")]
    TooFewPoints { points: usize, components: usize },
    #[error("covariance of component {component} is not positive definite")]
    DegenerateCovariance { component: usize },
    #[error("component {component} received zero total responsibility")]
    DegenerateCluster { component: usize },
    #[error("re-seeding failed to revive empty components")]
    ReseedFailed,
}

/// Relative covariance floor: lambda = REG_SCALE * mean |z|^2 is added to
/// both diagonal entries after every M step.
const REG_SCALE: f64 = 1e-6;
/// A component whose total responsibility drops below RESEED_SCALE * N is
/// re-seeded at the worst-explained point.
const RESEED_SCALE: f64 = 1e-8;
/// K-means rounds used to initialize the mixture.
const KMEANS_INIT_ITERS: usize = 3;
/// Give up after this many re-seed attempts within one fit.
const MAX_RESEEDS: usize = 8;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A set of 2-D observations (I/Q coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<[f64; 2]>,
}

impl PointSet {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        assert!(
            points.iter().all(|p| p[0].is_finite() && p[1].is_finite()),
            "coordinates must be finite"
        );
        Self { points }
    }

    pub fn from_iq(frame: &IqFrame) -> Self {
        Self::new(frame.iter().map(|z| [z.re, z.im]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_slice(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn mean_energy(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
        sum / self.points.len() as f64
    }

    /// Sample mean and covariance of the whole set.
    fn global_moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let n = self.points.len().max(1) as f64;
        let mut mx = 0.0;
        let mut my = 0.0;
        for p in &self.points {
            mx += p[0];
            my += p[1];
        }
        mx /= n;
        my /= n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut syy = 0.0;
        for p in &self.points {
            let dx = p[0] - mx;
            let dy = p[1] - my;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        ([mx, my], [[sxx / n, sxy / n], [sxy / n, syy / n]])
    }
}

/// Gaussian mixture parameters plus the fit history.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmState {
    /// Component weights, summing to 1.
    pub weights: Vec<f64>,
    /// Component means.
    pub means: Vec<[f64; 2]>,
    /// Symmetric 2x2 component covariances.
    pub covariances: Vec<[[f64; 2]; 2]>,
    /// EM sweeps accepted during the fit.
    pub iterations: usize,
    /// Log-likelihood after initialization and after each accepted sweep.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmState {
    pub fn components(&self) -> usize {
        self.weights.len()
    }
}

/// Posterior component probabilities, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: Vec<f64>,
    points: usize,
    components: usize,
}

impl Responsibilities {
    pub fn new(values: Vec<f64>, points: usize, components: usize) -> Self {
        assert_eq!(values.len(), points * components);
        for i in 0..points {
            let row = &values[i * components..(i + 1) * components];
            let sum: f64 = row.iter().sum();
            assert!(
                (sum - 1.0).abs() < 1e-9 && row.iter().all(|&g| (0.0..=1.0).contains(&g)),
                "row {i} is not a probability vector (sum {sum})"
            );
        }
        Self { values, points, components }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

// ---------------------------------------------------------------------------
// Gaussian density
// ---------------------------------------------------------------------------

/// Log of the 2-D normal density. Symmetric terms are grouped so that the
/// value is exactly preserved when point, mean, and covariance are rotated
/// together by a multiple of 90 degrees.
fn log_gauss2(
    z: [f64; 2],
    mean: [f64; 2],
    cov: &[[f64; 2]; 2],
    component: usize,
) -> Result<f64, ClusteringError> {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[0][1];
    if !(det > 0.0) || cov[0][0] <= 0.0 {
        return Err(ClusteringError::DegenerateCovariance { component });
    }
    let dx = z[0] - mean[0];
    let dy = z[1] - mean[1];
    let quad = (dx * dx * cov[1][1] + dy * dy * cov[0][0]) - 2.0 * dx * dy * cov[0][1];
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(-ln_2pi - 0.5 * det.ln() - 0.5 * (quad / det))
}

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

/// K-means output: centroids, hard assignments, and the number of Lloyd
/// updates that were performed.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub centroids: Vec<[f64; 2]>,
    pub assignments: Vec<usize>,
    pub updates_performed: usize,
}

fn assign_points(ps: &PointSet, centroids: &[[f64; 2]]) -> Vec<usize> {
    ps.as_slice()
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                let d = dx * dx + dy * dy;
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn lloyd_update(ps: &PointSet, assignments: &[usize], centroids: &mut [[f64; 2]]) {
    let m = centroids.len();
    let mut sums = vec![[0.0f64; 2]; m];
    let mut counts = vec![0usize; m];
    for (p, &a) in ps.as_slice().iter().zip(assignments) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    for j in 0..m {
        if counts[j] > 0 {
            centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
        } else {
            // Empty cluster: re-seed at the point farthest from its centroid.
            let mut far = 0usize;
            let mut far_d = -1.0;
            for (i, (p, &a)) in ps.as_slice().iter().zip(assignments).enumerate() {
                let dx = p[0] - centroids[a][0];
                let dy = p[1] - centroids[a][1];
                let d = dx * dx + dy * dy;
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            centroids[j] = ps.as_slice()[far];
        }
    }
}

/// Lloyd's algorithm from `m` distinct random data points, running exactly
/// `iters` assignment/update rounds. The returned assignments are taken
/// against the final centroids.
pub fn kmeans_init(
    ps: &PointSet,
    m: usize,
    iters: usize,
    rng: &mut impl Rng,
) -> Result<KmeansResult, ClusteringError> {
    if ps.len() < m {
        return Err(ClusteringError::TooFewPoints { points: ps.len(), components: m });
    }
    assert!(iters >= 1, "at least one Lloyd round required");

    let mut seed_idx: Vec<usize> = Vec::with_capacity(m);
    while seed_idx.len() < m {
        let i = rng.random_range(0..ps.len());
        if !seed_idx.contains(&i) {
            seed_idx.push(i);
        }
    }
    let mut centroids: Vec<[f64; 2]> = seed_idx.iter().map(|&i| ps.as_slice()[i]).collect();

    let mut updates = 0;
    for _ in 0..iters {
        let assignments = assign_points(ps, &centroids);
        lloyd_update(ps, &assignments, &mut centroids);
        updates += 1;
    }
    let assignments = assign_points(ps, &centroids);
    Ok(KmeansResult { centroids, assignments, updates_performed: updates })
}

/// K-means run to convergence (assignments stable) or `max_iters` rounds.
/// This is the clustering backend that models every cluster with the same
/// isotropic spread, i.e. centroids are all it estimates.
pub fn kmeans_cluster(
    ps: &PointSet,
    m: usize,
    max_iters: usize,
    rng: &mut impl Rng,
) -> Result<KmeansResult, ClusteringError> {
    let mut result = kmeans_init(ps, m, 1, rng)?;
    let mut assignments = result.assignments.clone();
    for _ in 1..max_iters {
        lloyd_update(ps, &assignments, &mut result.centroids);
        result.updates_performed += 1;
        let next = assign_points(ps, &result.centroids);
        if next == assignments {
            assignments = next;
            break;
        }
        assignments = next;
    }
    result.assignments = assignments;
    Ok(result)
}

// ---------------------------------------------------------------------------
// EM steps
// ---------------------------------------------------------------------------

/// Posterior responsibilities of each component for each point, computed in
/// the log domain with max subtraction.
pub fn e_step(ps: &PointSet, g: &GmmState) -> Result<Responsibilities, ClusteringError> {
    let m = g.components();
    let mut values = Vec::with_capacity(ps.len() * m);
    let log_w: Vec<f64> = g.weights.iter().map(|&w| w.ln()).collect();
    let mut lp = vec![0.0f64; m];
    for &z in ps.as_slice() {
        for j in 0..m {
            lp[j] = log_w[j] + log_gauss2(z, g.means[j], &g.covariances[j], j)?;
        }
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..m {
            lp[j] = (lp[j] - max).exp();
            denom += lp[j];
        }
        for j in 0..m {
            values.push(lp[j] / denom);
        }
    }
    Ok(Responsibilities { values, points: ps.len(), components: m })
}

/// Responsibility-weighted parameter update. Means and covariances always
/// update; weights only when `update_weights` is set, otherwise they carry
/// over from `prev` (pinned at 1/M in the standard configuration).
pub fn m_step(
    ps: &PointSet,
    r: &Responsibilities,
    prev: &GmmState,
    update_weights: bool,
) -> Result<GmmState, ClusteringError> {
    let m = r.components();
    let n = r.points();
    assert_eq!(n, ps.len());
    assert_eq!(m, prev.components());

    let mut totals = vec![0.0f64; m];
    let mut sum_x = vec![0.0f64; m];
    let mut sum_y = vec![0.0f64; m];
    for (i, p) in ps.as_slice().iter().enumerate() {
        let row = r.row(i);
        for j in 0..m {
            totals[j] += row[j];
            sum_x[j] += row[j] * p[0];
            sum_y[j] += row[j] * p[1];
        }
    }
    for (j, &t) in totals.iter().enumerate() {
        if t <= 0.0 {
            return Err(ClusteringError::DegenerateCluster { component: j });
        }
    }

    let means: Vec<[f64; 2]> = (0..m).map(|j| [sum_x[j] / totals[j], sum_y[j] / totals[j]]).collect();

    let mut sxx = vec![0.0f64; m];
    let mut sxy = vec![0.0f64; m];
    let mut syy = vec![0.0f64; m];
    for (i, p) in ps.as_slice().iter().enumerate() {
        let row = r.row(i);
        for j in 0..m {
            let dx = p[0] - means[j][0];
            let dy = p[1] - means[j][1];
            sxx[j] += row[j] * (dx * dx);
            sxy[j] += row[j] * (dx * dy);
            syy[j] += row[j] * (dy * dy);
        }
    }
    let covariances: Vec<[[f64; 2]; 2]> = (0..m)
        .map(|j| {
            let t = totals[j];
            [[sxx[j] / t, sxy[j] / t], [sxy[j] / t, syy[j] / t]]
        })
        .collect();

    let weights = if update_weights {
        let grand: f64 = totals.iter().sum();
        totals.iter().map(|&t| t / grand).collect()
    } else {
        prev.weights.clone()
    };

    Ok(GmmState {
        weights,
        means,
        covariances,
        iterations: prev.iterations,
        log_likelihood_trace: prev.log_likelihood_trace.clone(),
    })
}

/// Total log-likelihood of the point set under the mixture.
pub fn log_likelihood(ps: &PointSet, g: &GmmState) -> Result<f64, ClusteringError> {
    let m = g.components();
    let log_w: Vec<f64> = g.weights.iter().map(|&w| w.ln()).collect();
    let mut ll = 0.0;
    let mut lp = vec![0.0f64; m];
    for &z in ps.as_slice() {
        for j in 0..m {
            lp[j] = log_w[j] + log_gauss2(z, g.means[j], &g.covariances[j], j)?;
        }
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for j in 0..m {
            s += (lp[j] - max).exp();
        }
        ll += max + s.ln();
    }
    Ok(ll)
}

// ---------------------------------------------------------------------------
// Full fit
// ---------------------------------------------------------------------------

/// Options for [`gmm_fit_from_init`].
#[derive(Debug, Clone, Copy)]
pub struct GmmOptions {
    /// Stop when the log-likelihood improvement falls below this.
    pub eps: f64,
    /// Hard cap on EM sweeps.
    pub max_iter: usize,
    /// Update component weights each sweep instead of keeping them fixed.
    pub update_weights: bool,
}

impl GmmOptions {
    /// Default stopping rule for a set of `n` points: eps = 1e-6 * n,
    /// at most 100 sweeps, weights pinned.
    pub fn for_points(n: usize) -> Self {
        Self { eps: 1e-6 * n as f64, max_iter: 100, update_weights: false }
    }
}

fn regularize(covariances: &mut [[[f64; 2]; 2]], floor: f64) {
    for c in covariances.iter_mut() {
        c[0][0] += floor;
        c[1][1] += floor;
    }
}

/// EM from explicit initial parameters. Covariances get a small diagonal
/// floor after every update; a component whose total responsibility falls
/// below RESEED_SCALE * N is re-seeded at the point with the lowest maximum
/// responsibility. An update that would lower the log-likelihood (possible
/// only through the floor) is rejected and the fit stops at the best state.
pub fn gmm_fit_from_init(
    ps: &PointSet,
    weights: Vec<f64>,
    means: Vec<[f64; 2]>,
    covariances: Vec<[[f64; 2]; 2]>,
    opts: &GmmOptions,
) -> Result<GmmState, ClusteringError> {
    let floor = REG_SCALE * ps.mean_energy();
    let (global_mean, mut global_cov) = ps.global_moments();
    let _ = global_mean;
    global_cov[0][0] += floor;
    global_cov[1][1] += floor;

    let mut state = GmmState {
        weights,
        means,
        covariances,
        iterations: 0,
        log_likelihood_trace: Vec::new(),
    };
    let mut ll = log_likelihood(ps, &state)?;
    state.log_likelihood_trace.push(ll);

    let n = ps.len() as f64;
    let mut reseeds = 0usize;

    loop {
        if state.iterations >= opts.max_iter {
            break;
        }
        let resp = e_step(ps, &state)?;

        // Revive starved components before the update would divide by ~0.
        let m = state.components();
        let mut starved: Option<usize> = None;
        for j in 0..m {
            let total: f64 = (0..resp.points()).map(|i| resp.row(i)[j]).sum();
            if total < RESEED_SCALE * n {
                starved = Some(j);
                break;
            }
        }
        if let Some(j) = starved {
            if reseeds >= MAX_RESEEDS {
                return Err(ClusteringError::ReseedFailed);
            }
            reseeds += 1;
            let mut worst = 0usize;
            let mut worst_max = f64::INFINITY;
            for i in 0..resp.points() {
                let row_max = resp.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if row_max < worst_max {
                    worst_max = row_max;
                    worst = i;
                }
            }
            state.means[j] = ps.as_slice()[worst];
            state.covariances[j] = global_cov;
            ll = log_likelihood(ps, &state)?;
            continue;
        }

        let mut next = m_step(ps, &resp, &state, opts.update_weights)?;
        regularize(&mut next.covariances, floor);
        let next_ll = log_likelihood(ps, &next)?;
        if next_ll < ll {
            break;
        }
        state = next;
        state.iterations += 1;
        state.log_likelihood_trace.push(next_ll);
        let improvement = next_ll - ll;
        ll = next_ll;
        if improvement < opts.eps {
            break;
        }
    }
    Ok(state)
}

/// Fit an M-component mixture: K-means initialization (3 Lloyd rounds, seeds
/// drawn as distinct data points), per-cluster moments as the starting
/// parameters, then EM sweeps until the improvement drops below `eps` or
/// `max_iter` is hit. Weights stay at 1/M.
pub fn gmm_fit(
    ps: &PointSet,
    m: usize,
    eps: f64,
    max_iter: usize,
    rng: &mut impl Rng,
) -> Result<GmmState, ClusteringError> {
    if ps.len() < m {
        return Err(ClusteringError::TooFewPoints { points: ps.len(), components: m });
    }
    let init = kmeans_init(ps, m, KMEANS_INIT_ITERS, rng)?;
    let floor = REG_SCALE * ps.mean_energy();
    let (_, mut global_cov) = ps.global_moments();
    global_cov[0][0] += floor;
    global_cov[1][1] += floor;

    // Per-cluster sample covariance about the centroid; sparsely populated
    // clusters inherit the global spread.
    let mut covariances = vec![[[0.0f64; 2]; 2]; m];
    let mut counts = vec![0usize; m];
    let mut sxx = vec![0.0f64; m];
    let mut sxy = vec![0.0f64; m];
    let mut syy = vec![0.0f64; m];
    for (p, &a) in ps.as_slice().iter().zip(&init.assignments) {
        let dx = p[0] - init.centroids[a][0];
        let dy = p[1] - init.centroids[a][1];
        sxx[a] += dx * dx;
        sxy[a] += dx * dy;
        syy[a] += dy * dy;
        counts[a] += 1;
    }
    for j in 0..m {
        if counts[j] >= 2 {
            let c = counts[j] as f64;
            covariances[j] = [
                [sxx[j] / c + floor, sxy[j] / c],
                [sxy[j] / c, syy[j] / c + floor],
            ];
            let det = covariances[j][0][0] * covariances[j][1][1]
                - covariances[j][0][1] * covariances[j][0][1];
            if !(det > 0.0) {
                covariances[j] = global_cov;
            }
        } else {
            covariances[j] = global_cov;
        }
    }

    let weights = vec![1.0 / m as f64; m];
    let opts = GmmOptions { eps, max_iter, update_weights: false };
    gmm_fit_from_init(ps, weights, init.centroids, covariances, &opts)
}
