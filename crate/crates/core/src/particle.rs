//! Bootstrap particle filter with the discrete Girsanov weights.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, RngStream};
use crate::scenario::{validate_scenario, Scenario};
use crate::simulate::ObservationPath;

/// Particles per independent noise stream.
pub const CHUNK: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Weighted particle approximation of the unnormalised filter: the mass
/// estimate is `exp(log_mass) * mean(exp(log_weights))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub m: usize,
    /// Row-major `N x m`.
    pub positions: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub log_mass: f64,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.m..(i + 1) * self.m]
    }

    /// `log mean exp(log_weights)` and the weights scaled so the largest is 1.
    fn scaled_weights(&self) -> Result<(f64, Vec<f64>)> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::FilterCollapse);
        }
        let u: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = u.iter().sum();
        Ok((max + (total / self.len() as f64).ln(), u))
    }

    pub fn ess(&self) -> Result<f64> {
        Ok(ess_of(&self.scaled_weights()?.1))
    }

    /// Log of the current unnormalised mass estimate.
    pub fn log_mass_estimate(&self) -> Result<f64> {
        Ok(self.log_mass + self.scaled_weights()?.0)
    }
}

fn ess_of(u: &[f64]) -> f64 {
    let total: f64 = u.iter().sum();
    total * total / u.iter().map(|v| v * v).sum::<f64>()
}

/// Per-chunk random streams; chunk `c` always drives particles
/// `c * CHUNK .. (c + 1) * CHUNK`, whatever the thread count.
#[derive(Debug, Clone)]
pub struct ParticleNoise {
    chunks: Vec<ChaCha8Rng>,
    resample: ChaCha8Rng,
}

impl ParticleNoise {
    pub fn new(stream: RngStream, particles: usize) -> Self {
        let chunks = (0..particles.div_ceil(CHUNK) as u64)
            .map(|c| stream.substream(c + 1).rng())
            .collect();
        Self {
            chunks,
            resample: stream.substream(0).rng(),
        }
    }

    /// Noise for replication `replication` of a scenario run.
    pub fn for_run(seed: u64, replication: u64, particles: usize) -> Self {
        Self::new(
            RngStream::new(seed, purpose::PARTICLES).substream(replication),
            particles,
        )
    }

    pub fn resample_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.resample
    }
}

/// Draw `n` particles from the initial law, unit weights, then apply `dnu_0`.
pub fn pf_init(s: &Scenario, n: usize, noise: &mut ParticleNoise) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "particle count must be at least 1".into(),
        ));
    }
    if noise.chunks.len() < n.div_ceil(CHUNK) {
        return Err(Error::InvalidArgument(
            "noise streams do not cover the particle count".into(),
        ));
    }
    let m = s.m();
    let mut positions = vec![0.0; n * m];
    let jump = s.nu().initial_jump();
    positions
        .par_chunks_mut(CHUNK * m)
        .zip(noise.chunks.par_iter_mut())
        .try_for_each(|(block, rng)| -> Result<()> {
            for x in block.chunks_mut(m) {
                s.sample_initial(rng, x)?;
                if let Some(j) = jump {
                    for i in 0..m {
                        x[i] += j[i];
                    }
                }
            }
            Ok(())
        })?;
    Ok(ParticleCloud {
        m,
        positions,
        log_weights: vec![0.0; n],
        log_mass: 0.0,
    })
}

/// Weight by the observation increment over `[t_k, t_{k+1}]` using `x_k`,
/// then propagate every particle to `t_{k+1}` (Euler step, `dnu^c_k` and the
/// jump at `k + 1`, common to all particles).
pub fn pf_step(
    cloud: &mut ParticleCloud,
    s: &Scenario,
    k: usize,
    dy: &[f64],
    noise: &mut ParticleNoise,
) -> Result<()> {
    let (m, n, d) = (s.m(), s.n(), s.d());
    let grid = s.time_grid();
    if k >= grid.steps() {
        return Err(Error::MisalignedInterval(
            grid.node(k.min(grid.steps())),
            f64::NAN,
        ));
    }
    let t = grid.node(k);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let g_inv = s.gamma_inv_at(k)?;
    let gi: Vec<f64> = (0..n * n).map(|c| g_inv[(c / n, c % n)]).collect();
    let dbbar: Vec<f64> = gi
        .chunks(n)
        .map(|row| row.iter().zip(dy).map(|(a, b)| a * b).sum())
        .collect();
    let sigma = s.sigma(t, &[]);
    let sig: Vec<f64> = (0..m * d).map(|c| sigma[(c / d, c % d)]).collect();
    let dnu = s.nu().continuous_increment(k);
    let jump = s.nu().jump_at(k + 1);
    let weigh = !s.observation_is_zero();

    cloud
        .positions
        .par_chunks_mut(CHUNK * m)
        .zip(cloud.log_weights.par_chunks_mut(CHUNK))
        .zip(noise.chunks.par_iter_mut())
        .try_for_each(|((block, lws), rng)| -> Result<()> {
            let count = lws.len();
            if weigh {
                let mut h = vec![0.0; count * n];
                s.observation_batch(t, block, &mut h);
                if n == 1 {
                    let (g, db) = (gi[0], dbbar[0]);
                    for (lw, h) in lws.iter_mut().zip(&h) {
                        let u = g * h;
                        *lw += u * db - 0.5 * u * u * dt;
                    }
                } else {
                    for (lw, h) in lws.iter_mut().zip(h.chunks(n)) {
                        let mut drive = 0.0;
                        let mut norm2 = 0.0;
                        for (row, db) in gi.chunks(n).zip(&dbbar) {
                            let u: f64 = row.iter().zip(h).map(|(a, b)| a * b).sum();
                            drive += u * db;
                            norm2 += u * u;
                        }
                        *lw += drive - 0.5 * norm2 * dt;
                    }
                }
            }
            let mut b = vec![0.0; count * m];
            s.drift_batch(t, block, &mut b);
            let mut dw = vec![0.0; count * d];
            for v in dw.iter_mut() {
                *v = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
            if m == 1 && d == 1 {
                let (sg, dn, j) = (sig[0], dnu[0], jump.map(|j| j[0]));
                for ((x, b), w) in block.iter_mut().zip(&b).zip(&dw) {
                    let mut next = *x + b * dt + dn;
                    next += sg * w;
                    if let Some(j) = j {
                        next += j;
                    }
                    *x = next;
                }
            } else {
                let mut next = vec![0.0; m];
                for (p, (x, b)) in block.chunks_mut(m).zip(b.chunks(m)).enumerate() {
                    let w = &dw[p * d..(p + 1) * d];
                    for i in 0..m {
                        next[i] = x[i] + b[i] * dt + dnu[i];
                    }
                    for i in 0..m {
                        let mut v = 0.0;
                        for j in 0..d {
                            v += sig[i * d + j] * w[j];
                        }
                        next[i] += v;
                    }
                    if let Some(j) = jump {
                        for i in 0..m {
                            next[i] += j[i];
                        }
                    }
                    x.copy_from_slice(&next);
                }
            }
            if block.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite {
                    step: k,
                    what: "particle position".into(),
                })
            }
        })
}

/// Systematic resampling when `ESS / N < threshold`. The unnormalised mass
/// estimate is carried into `log_mass` and is unchanged. Returns whether
/// resampling happened.
pub fn pf_resample<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    threshold: f64,
    rng: &mut R,
) -> Result<bool> {
    let (log_mean, u) = cloud.scaled_weights()?;
    resample_scaled(cloud, log_mean, &u, threshold, rng)
}

fn resample_scaled<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    log_mean: f64,
    u: &[f64],
    threshold: f64,
    rng: &mut R,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "resampling threshold {threshold} outside [0, 1]"
        )));
    }
    let n = cloud.len();
    if ess_of(u) / n as f64 >= threshold {
        return Ok(false);
    }
    let total: f64 = u.iter().sum();
    let m = cloud.m;
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut positions = Vec::with_capacity(n * m);
    let mut acc = u[0] / total;
    let mut src = 0;
    for i in 0..n {
        let target = u0 + i as f64 / n as f64;
        while target > acc && src + 1 < n {
            src += 1;
            acc += u[src] / total;
        }
        positions.extend_from_slice(cloud.particle(src));
    }
    cloud.positions = positions;
    cloud.log_weights.fill(0.0);
    cloud.log_mass += log_mean;
    Ok(true)
}

/// Self-normalised moments of the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEstimate {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub log_mass: f64,
    pub ess: f64,
}

pub fn pf_estimate(cloud: &ParticleCloud) -> Result<ParticleEstimate> {
    let (log_mean, u) = cloud.scaled_weights()?;
    Ok(estimate_scaled(cloud, log_mean, &u))
}

fn estimate_scaled(cloud: &ParticleCloud, log_mean: f64, u: &[f64]) -> ParticleEstimate {
    let m = cloud.m;
    let total: f64 = u.iter().sum();
    // moments are accumulated relative to the first particle
    let origin = cloud.particle(0);
    let mut shift = vec![0.0; m];
    for (x, ui) in cloud.positions.chunks(m).zip(u) {
        for ((a, x), o) in shift.iter_mut().zip(x).zip(origin) {
            *a += ui * (x - o);
        }
    }
    for a in &mut shift {
        *a /= total;
    }
    let mut cov = vec![0.0; m * m];
    let mut dev = vec![0.0; m];
    for (x, ui) in cloud.positions.chunks(m).zip(u) {
        for a in 0..m {
            dev[a] = x[a] - origin[a] - shift[a];
        }
        for a in 0..m {
            let wa = ui * dev[a];
            for b in 0..m {
                cov[a * m + b] += wa * dev[b];
            }
        }
    }
    let cov = DMatrix::from_row_slice(m, m, &cov) / total;
    let mean = origin.iter().zip(&shift).map(|(o, d)| o + d).collect();
    ParticleEstimate {
        mean,
        cov,
        log_mass: cloud.log_mass + log_mean,
        ess: ess_of(u),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleOptions {
    pub particles: usize,
    pub threshold: f64,
    pub seed: u64,
    pub replication: u64,
    /// Keep a copy of the cloud every this many steps (plus the final one).
    pub dump_every: Option<usize>,
}

impl ParticleOptions {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            threshold: DEFAULT_THRESHOLD,
            seed,
            replication: 0,
            dump_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub times: Vec<f64>,
    pub estimates: Vec<ParticleEstimate>,
    pub resampled: usize,
    pub dumps: Vec<(usize, ParticleCloud)>,
}

/// Filter a full observation path on the scenario time grid. Estimates and
/// dumps at `t_k` are taken after weighting and before resampling.
pub fn run_particle(
    s: &Scenario,
    y: &ObservationPath,
    opts: ParticleOptions,
) -> Result<ParticleRun> {
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(Error::InvalidArgument(format!(
            "resampling threshold {} outside [0, 1]",
            opts.threshold
        )));
    }
    validate_scenario(s).into_result()?;
    y.check_grid(s)?;
    let grid = s.time_grid();
    let mut noise = ParticleNoise::for_run(opts.seed, opts.replication, opts.particles);
    let mut cloud = pf_init(s, opts.particles, &mut noise)?;
    let mut estimates = Vec::with_capacity(grid.steps() + 1);
    let mut dumps = Vec::new();
    let mut resampled = 0;
    let dump = |k: usize, c: &ParticleCloud, dumps: &mut Vec<(usize, ParticleCloud)>| {
        if let Some(every) = opts.dump_every {
            if every > 0 && (k.is_multiple_of(every) || k == grid.steps()) {
                dumps.push((k, c.clone()));
            }
        }
    };
    estimates.push(pf_estimate(&cloud)?);
    dump(0, &cloud, &mut dumps);
    for k in 0..grid.steps() {
        pf_step(&mut cloud, s, k, &y.increment(k), &mut noise)?;
        let (log_mean, u) = cloud.scaled_weights()?;
        estimates.push(estimate_scaled(&cloud, log_mean, &u));
        dump(k + 1, &cloud, &mut dumps);
        if resample_scaled(
            &mut cloud,
            log_mean,
            &u,
            opts.threshold,
            noise.resample_rng(),
        )? {
            resampled += 1;
        }
    }
    Ok(ParticleRun {
        times: grid.nodes(),
        estimates,
        resampled,
        dumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::ou_spec;
    use crate::scenario::{DiffusionSpec, DriftSpec, InitialLawSpec, NuSpec, ObservationSpec};
    use crate::simulate::{simulate_bundle, simulate_signal, MeanSe, Measure};
    use rand::SeedableRng;

    fn cloud_from(positions: Vec<f64>, log_weights: Vec<f64>) -> ParticleCloud {
        ParticleCloud {
            m: 1,
            positions,
            log_weights,
            log_mass: 0.0,
        }
    }

    #[test]
    fn init_point_mass_and_shift() {
        let mut spec = ou_spec();
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![0.4],
            cov: vec![vec![0.0]],
        };
        spec.nu = NuSpec {
            jumps: vec![(0.0, vec![1.0])],
            continuous: vec![],
        };
        let s = Scenario::from_spec(spec).unwrap();
        let mut noise = ParticleNoise::for_run(1, 0, 600);
        let c = pf_init(&s, 600, &mut noise).unwrap();
        assert!(c.positions.iter().all(|&x| x == 1.4));
        assert_eq!(c.log_mass, 0.0);
        assert!(c.log_weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn init_sample_mean_clt() {
        let mut spec = ou_spec();
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![1.5],
            cov: vec![vec![4.0]],
        };
        spec.nu = NuSpec::default();
        let s = Scenario::from_spec(spec).unwrap();
        let n = 100_000;
        let c = pf_init(&s, n, &mut ParticleNoise::for_run(3, 0, n)).unwrap();
        let mean = c.positions.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() <= 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn zero_observation_keeps_weights() {
        let mut spec = ou_spec();
        spec.coeffs.h = ObservationSpec::Zero;
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Reference)
            .unwrap()
            .observation;
        let run = run_particle(&s, &y, ParticleOptions::new(500, 9)).unwrap();
        assert!(run
            .estimates
            .iter()
            .all(|e| e.log_mass == 0.0 && e.ess == 500.0));
    }

    #[test]
    fn two_particle_weight_difference() {
        let mut spec = ou_spec();
        spec.coeffs.sigma = DiffusionSpec::Scalar { s: 0.0 };
        let s = Scenario::from_spec(spec).unwrap();
        let (xa, xb, dy) = (0.7, -0.2, 0.05);
        let dt = s.time_grid().dt();
        let mut c = ParticleCloud {
            m: 1,
            positions: vec![xa, xb],
            log_weights: vec![0.0; 2],
            log_mass: 0.0,
        };
        pf_step(&mut c, &s, 0, &[dy], &mut ParticleNoise::for_run(0, 0, 2)).unwrap();
        let expected = (xa - xb) * dy - 0.5 * (xa * xa - xb * xb) * dt;
        assert!((c.log_weights[0] - c.log_weights[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_particles_keep_full_ess() {
        let mut spec = ou_spec();
        spec.coeffs.sigma = DiffusionSpec::Scalar { s: 0.0 };
        let s = Scenario::from_spec(spec).unwrap();
        let mut c = cloud_from(vec![0.3; 50], vec![0.0; 50]);
        pf_step(&mut c, &s, 3, &[0.2], &mut ParticleNoise::for_run(0, 0, 50)).unwrap();
        assert!(c.log_weights.iter().all(|&w| w == c.log_weights[0]));
        assert_eq!(c.ess().unwrap(), 50.0);
    }

    #[test]
    fn estimate_of_symmetric_pair() {
        let e = pf_estimate(&cloud_from(vec![-1.0, 1.0], vec![0.0, 0.0])).unwrap();
        assert_eq!(e.mean, vec![0.0]);
        assert_eq!(e.cov[(0, 0)], 1.0);
        assert_eq!(e.ess, 2.0);
    }

    #[test]
    fn resampling_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = cloud_from(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]);
        assert!(!pf_resample(&mut c, 0.5, &mut rng).unwrap());
        assert_eq!(c.ess().unwrap(), 4.0);

        let mut c = cloud_from(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        );
        assert_eq!(c.ess().unwrap(), 1.0);
        let before = c.log_mass_estimate().unwrap();
        assert!(pf_resample(&mut c, 0.5, &mut rng).unwrap());
        assert!(c.positions.iter().all(|&x| x == 2.0));
        assert_eq!(c.log_mass_estimate().unwrap(), before);

        let mut c = cloud_from(vec![1.0, 2.0], vec![f64::NEG_INFINITY; 2]);
        assert!(matches!(
            pf_resample(&mut c, 0.5, &mut rng),
            Err(Error::FilterCollapse)
        ));
        assert!(pf_resample(&mut cloud_from(vec![1.0], vec![0.0]), 1.5, &mut rng).is_err());
    }

    #[test]
    fn nu_consistency_with_frozen_dynamics() {
        let mut spec = ou_spec();
        spec.coeffs.sigma = DiffusionSpec::Scalar { s: 0.0 };
        spec.coeffs.b = DriftSpec::Linear {
            a: vec![vec![-0.5]],
            c: Some(vec![0.1]),
        };
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![0.3],
            cov: vec![vec![0.0]],
        };
        spec.nu = NuSpec {
            jumps: vec![(0.3, vec![0.4]), (0.8, vec![-0.2])],
            continuous: vec![(1.0, vec![0.3])],
        };
        let s = Scenario::from_spec(spec).unwrap();
        let path = simulate_signal(&s, &mut RngStream::new(0, 0).rng()).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Physical)
            .unwrap()
            .observation;
        let run = run_particle(&s, &y, ParticleOptions::new(300, 4)).unwrap();
        for (k, e) in run.estimates.iter().enumerate() {
            assert_eq!(e.mean[0], path.at(k)[0], "step {k}");
        }
    }

    proptest::proptest! {
        #[test]
        fn exchangeable(xs in proptest::collection::vec(-5.0f64..5.0, 2..40), seed in 0u64..1000) {
            let n = xs.len();
            let lws: Vec<f64> = xs.iter().map(|x| -0.3 * x * x + x.sin()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let a = pf_estimate(&cloud_from(xs.clone(), lws.clone())).unwrap();
            let b = pf_estimate(&cloud_from(
                order.iter().map(|&i| xs[i]).collect(),
                order.iter().map(|&i| lws[i]).collect(),
            )).unwrap();
            proptest::prop_assert!((a.mean[0] - b.mean[0]).abs() <= 1e-12);
            proptest::prop_assert!((a.cov[(0, 0)] - b.cov[(0, 0)]).abs() <= 1e-12);
            proptest::prop_assert!((a.log_mass - b.log_mass).abs() <= 1e-12);
            proptest::prop_assert!((a.ess - b.ess).abs() <= 1e-9 * a.ess);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let s = Scenario::from_spec(ou_spec()).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Physical)
            .unwrap()
            .observation;
        let opts = ParticleOptions::new(1000, 5);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| run_particle(&s, &y, opts)).unwrap();
        let b = four.install(|| run_particle(&s, &y, opts)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unnormalised_mass_is_a_martingale() {
        let mut spec = ou_spec();
        spec.steps = 100;
        spec.grid = None;
        let s = Scenario::from_spec(spec).unwrap();
        let masses: Vec<f64> = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let y = simulate_bundle(&s, r, Measure::Reference)
                    .unwrap()
                    .observation;
                let mut opts = ParticleOptions::new(50, 11);
                opts.replication = r;
                let run = run_particle(&s, &y, opts).unwrap();
                run.estimates.last().unwrap().log_mass.exp()
            })
            .collect();
        let est = MeanSe::from_samples(&masses);
        assert!(est.within(1.0, 3.0), "{est:?}");
    }

    #[test]
    fn resampling_is_unbiased() {
        let xs: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let lws: Vec<f64> = xs.iter().map(|x| -2.0 * (x - 0.7) * (x - 0.7)).collect();
        let target = pf_estimate(&cloud_from(xs.clone(), lws.clone())).unwrap();
        let mut means = Vec::new();
        let mut second = Vec::new();
        let target_second = target.cov[(0, 0)] + target.mean[0] * target.mean[0];
        for r in 0..2000 {
            let mut rng = ChaCha8Rng::seed_from_u64(r);
            let mut c = cloud_from(xs.clone(), lws.clone());
            assert!(pf_resample(&mut c, 1.0, &mut rng).unwrap());
            let n = c.len() as f64;
            means.push(c.positions.iter().sum::<f64>() / n);
            second.push(c.positions.iter().map(|x| x * x).sum::<f64>() / n);
        }
        let (m1, m2) = (MeanSe::from_samples(&means), MeanSe::from_samples(&second));
        assert!(
            m1.within(target.mean[0], 3.0)
                || m1.se < 1e-12 && (m1.mean - target.mean[0]).abs() < 1e-12,
            "{m1:?}"
        );
        assert!(m2.within(target_second, 3.0), "{m2:?} vs {target_second}");
    }
}
