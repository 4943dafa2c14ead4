//! Path-space measures on the projective limit `X_∞(r)`.
//!
//! A path `(x₀, x₁, …)` with `r(x_{n+1}) = x_n` is recorded through its
//! coordinates `θ_n`. A measure `μ̂` on paths is never built; it is carried by
//! its marginals `μ_n = μ̂ ∘ θ_n⁻¹ = V^(n) dμ₀`, which exist and are unique
//! once `μ₀` is a fixed point of `T_V`. Every statement about `μ̂` is checked
//! on these marginals.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{self, DensityMeasure, Measure};
use crate::shift::{format_codes, CylinderFunction, Subshift, Word};

/// `V` together with a validated fixed point `μ₀`, standing for the unique
/// `V`-quasi-invariant path measure `μ̂` it determines.
#[derive(Clone, Debug)]
pub struct PathMeasure {
    weight: CylinderFunction,
    mu0: DensityMeasure,
    fixed_point_residual: f64,
    overrides: BTreeMap<usize, DensityMeasure>,
}

/// Validates `T_V(μ₀) = μ₀` within `tol` and wraps the pair.
///
/// Both sides are densities, so agreement at the depth of the finer one
/// certifies agreement on every cylinder.
pub fn build_path_measure(weight: &CylinderFunction, mu0: DensityMeasure, tol: f64) -> Result<PathMeasure> {
    if weight.shift() != mu0.density().shift() {
        return Err(Error::ShiftMismatch);
    }
    weight.check_nonnegative()?;
    let depth = measure::certifying_depth(weight, &mu0);
    let residual = measure::check_fixed_point(weight, &Measure::Density(mu0.clone()), depth)?;
    if !(residual <= tol) {
        return Err(Error::NotFixedPoint { residual });
    }
    Ok(PathMeasure {
        weight: weight.clone(),
        mu0,
        fixed_point_residual: residual,
        overrides: BTreeMap::new(),
    })
}

/// Residuals of the quasi-invariance identities.
#[derive(Clone, Debug, Serialize)]
pub struct QuasiInvarianceReport {
    /// `∫ f dμ₀ = ∫ f∘r V dμ₀`.
    pub base: f64,
    /// Entry `n`: `dμ_{n+1} = (V∘rⁿ) dμ_n`.
    pub levels: Vec<f64>,
    pub residual: f64,
}

impl PathMeasure {
    pub fn weight(&self) -> &CylinderFunction {
        &self.weight
    }

    pub fn mu0(&self) -> &DensityMeasure {
        &self.mu0
    }

    pub fn shift(&self) -> &Arc<Subshift> {
        self.weight.shift()
    }

    pub fn fixed_point_residual(&self) -> f64 {
        self.fixed_point_residual
    }

    /// Replaces marginal `n >= 1` by an arbitrary measure. The result no
    /// longer describes a path measure; it exists to exercise the checks.
    pub fn with_corrupted_marginal(&self, n: usize, marginal: DensityMeasure) -> Result<PathMeasure> {
        if n == 0 {
            return Err(Error::Invalid("marginal 0 is μ₀ itself and cannot be replaced".into()));
        }
        if marginal.density().shift() != self.shift() {
            return Err(Error::ShiftMismatch);
        }
        let mut pm = self.clone();
        pm.overrides.insert(n, marginal);
        Ok(pm)
    }

    pub fn is_corrupted(&self) -> bool {
        !self.overrides.is_empty()
    }

    /// `μ_n = V^(n) dμ₀`.
    pub fn marginal(&self, n: usize) -> DensityMeasure {
        if let Some(m) = self.overrides.get(&n) {
            return m.clone();
        }
        if n == 0 {
            return self.mu0.clone();
        }
        let product = self.weight.weight_product(n).expect("weight validated");
        self.mu0.weighted_by(&product).expect("same shift")
    }

    /// `max_w |μ_{n+1}(r⁻¹[w]) - μ_n([w])|` over depth-`depth` words.
    pub fn check_consistency(&self, n: usize, depth: usize) -> Result<f64> {
        if depth == 0 {
            return Err(Error::DepthTooShallow { required: 1, actual: 0 });
        }
        let next = self.marginal(n + 1).masses_at(depth + 1);
        let pulled = preimage_masses(&next);
        let current = self.marginal(n).masses_at(depth);
        pulled.max_abs_diff(&current)
    }

    /// Both families of quasi-invariance identities on indicators of every
    /// depth `1..=depth`, for `n < n_max` in the level family.
    pub fn check_quasi_invariance(&self, depth: usize, n_max: usize) -> Result<QuasiInvarianceReport> {
        if depth == 0 {
            return Err(Error::DepthTooShallow { required: 1, actual: 0 });
        }
        let base = measure::check_fixed_point(&self.weight, &Measure::Density(self.marginal(0)), depth)?;
        let mut levels = Vec::with_capacity(n_max);
        let mut shifted = self.weight.clone();
        let mut current = self.marginal(0);
        for n in 0..n_max {
            let next = self.marginal(n + 1);
            let predicted = current.weighted_by(&shifted)?;
            let mut worst: f64 = 0.0;
            for d in 1..=depth {
                worst = worst.max(next.masses_at(d).max_abs_diff(&predicted.masses_at(d))?);
            }
            levels.push(worst);
            shifted = shifted.compose_with_shift();
            current = next;
        }
        let residual = levels.iter().copied().fold(base, f64::max);
        Ok(QuasiInvarianceReport {
            base,
            levels,
            residual,
        })
    }

    /// Depth on which the prepend probabilities `μ_{k+1}([a w]) / μ_k([w])`
    /// are exact and independent of `k`.
    pub fn kernel_depth(&self) -> usize {
        (self.weight.depth().saturating_sub(1))
            .max(self.mu0.density().depth())
            .max(1)
    }

    /// Exact sampler for `steps` prepends over a base of depth `base_depth`.
    pub fn sampler(&self, steps: usize, base_depth: usize) -> Result<Sampler> {
        Sampler::new(self, steps, base_depth)
    }

    /// `N` samples; sample `i` uses its own stream `(seed, i)`, so the result
    /// does not depend on `workers`.
    pub fn sample_paths(
        &self,
        steps: usize,
        base_depth: usize,
        count: usize,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<PathSample>> {
        self.sampler(steps, base_depth)?.sample_many(count, seed, workers)
    }

    /// Samples `count` paths and compares the `θ_steps` cylinder frequencies
    /// at `depth` with the exact marginal.
    pub fn empirical_check(
        &self,
        steps: usize,
        count: usize,
        depth: usize,
        seed: u64,
        workers: usize,
    ) -> Result<EmpiricalReport> {
        if count < 100 {
            return Err(Error::Invalid(format!("need at least 100 samples, got {count}")));
        }
        let samples = self.sample_paths(steps, depth, count, seed, workers)?;
        self.empirical_report(&samples, steps, depth)
    }

    /// Compares `θ_n` frequencies of existing samples with `μ_n` at `depth`.
    pub fn empirical_report(&self, samples: &[PathSample], n: usize, depth: usize) -> Result<EmpiricalReport> {
        if samples.is_empty() {
            return Err(Error::Invalid("no samples".into()));
        }
        let shift = self.shift();
        let layer = shift.layer(depth);
        let mut counts = vec![0usize; layer.len()];
        for s in samples {
            let theta = s.theta_codes(n)?;
            if theta.len() < depth {
                return Err(Error::DepthTooShallow {
                    required: depth,
                    actual: theta.len(),
                });
            }
            let r = layer
                .rank(&theta)
                .ok_or_else(|| Error::InadmissibleWord(format_codes(&theta, shift.alphabet_size())))?;
            counts[r] += 1;
        }
        let exact = self.marginal(n).masses_at(depth);
        let total = exact.total();
        let big_n = samples.len() as f64;
        let mut max_dev: f64 = 0.0;
        let mut sigma_bound: f64 = 0.0;
        let mut worst_z: f64 = 0.0;
        let mut pass = true;
        for (&c, &m) in counts.iter().zip(exact.values()) {
            let p = m / total;
            let dev = (c as f64 / big_n - p).abs();
            let bound = 3.0 * (p * (1.0 - p) / big_n).max(0.0).sqrt();
            max_dev = max_dev.max(dev);
            sigma_bound = sigma_bound.max(bound);
            if dev > bound {
                pass = false;
            }
            if bound > 0.0 {
                worst_z = worst_z.max(3.0 * dev / bound);
            } else if dev > 0.0 {
                worst_z = f64::INFINITY;
            }
        }
        Ok(EmpiricalReport {
            n,
            samples: samples.len(),
            depth,
            max_dev,
            sigma_bound,
            worst_z,
            pass,
        })
    }

    /// `E_n(ξ∘θ_N)` for `n = 0..=N` by exact conditional averaging over the
    /// prepend strings of length `N - n`.
    pub fn martingale_coordinates(&self, xi: &CylinderFunction, big_n: usize) -> Result<MartingaleCoordinates> {
        if xi.shift() != self.shift() {
            return Err(Error::ShiftMismatch);
        }
        let shift = self.shift().clone();
        let depth = xi.depth().max(self.kernel_depth());
        let layer = shift.layer(depth);
        let xi_l = xi.lookup();
        let top = self.marginal(big_n);
        let marginals: Vec<CylinderFunction> = (0..=big_n).map(|n| self.marginal(n).masses_at(depth)).collect();

        let mut levels = Vec::with_capacity(big_n + 1);
        for n in 0..=big_n {
            let t = big_n - n;
            let fine = top.masses_at(depth + t);
            let mut acc = vec![0.0; layer.len()];
            shift.layer(depth + t).for_each(|idx, u| {
                let r = layer.rank(&u[t..]).expect("admissible suffix");
                acc[r] += xi_l.get(u).expect("xi depth fits") * fine.values()[idx];
            });
            let values = divide_by_mass(acc, marginals[n].values());
            levels.push(CylinderFunction::from_values(shift.clone(), depth, values)?);
        }

        let mut tower_residual: f64 = 0.0;
        for n in 0..big_n {
            let upper = levels[n + 1].lookup();
            let next = self.marginal(n + 1).masses_at(depth + 1);
            let mut acc = vec![0.0; layer.len()];
            shift.layer(depth + 1).for_each(|idx, u| {
                let r = layer.rank(&u[1..]).expect("admissible suffix");
                acc[r] += upper.get(u).expect("level depth fits") * next.values()[idx];
            });
            let averaged = divide_by_mass(acc, marginals[n].values());
            let diff = averaged
                .iter()
                .zip(levels[n].values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            tower_residual = tower_residual.max(diff);
        }

        let norms = levels
            .iter()
            .zip(&marginals)
            .map(|(e, mu)| {
                e.values()
                    .iter()
                    .zip(mu.values())
                    .map(|(v, m)| v * v * m)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Ok(MartingaleCoordinates {
            depth,
            levels,
            norms,
            tower_residual,
        })
    }

    /// Checks `∫ |m∘θ₀|² |f∘r̂|² dμ̂ = ∫ |f|² dμ̂` for `f = χ_[w]∘θ₀` over all
    /// words `w` of depth `1..=depth`. Since `θ₀∘r̂ = r∘θ₀` the left side is
    /// `∫ |m|² χ_[w]∘r dμ₀`.
    pub fn check_isometry(&self, filter: &CylinderFunction<Complex64>, depth: usize, tol: f64) -> Result<f64> {
        if filter.shift() != self.shift() {
            return Err(Error::ShiftMismatch);
        }
        let modulus = filter.map(|z| z.norm_sqr());
        let deviation = modulus
            .zip_with(&self.weight, |a, b| (a - b).abs())?
            .sup();
        if deviation > tol {
            return Err(Error::FilterMismatch { deviation });
        }
        let mut worst: f64 = 0.0;
        for d in 1..=depth {
            let plain = self.mu0.masses_at(d);
            // ∫ |m|² χ_[w]∘r dμ₀ = Σ_a ∫_[a w] |m|² dμ₀
            let fine = self.mu0.weighted_by(&modulus)?.masses_at(d + 1);
            let lifted = preimage_masses(&fine);
            worst = worst.max(lifted.max_abs_diff(&plain)?);
        }
        Ok(worst)
    }
}

/// `w ↦ Σ_a m([a w])` for a mass table of depth `d + 1`.
fn preimage_masses(masses: &CylinderFunction) -> CylinderFunction {
    let shift = masses.shift().clone();
    let depth = masses.depth() - 1;
    let lower = shift.layer(depth);
    let mut out = vec![0.0; lower.len()];
    shift.layer(depth + 1).for_each(|idx, u| {
        out[lower.rank(&u[1..]).expect("admissible suffix")] += masses.values()[idx];
    });
    CylinderFunction::from_values(shift, depth.max(1), out).expect("layer length")
}

/// Conditional values; zero-mass cylinders get 0.
fn divide_by_mass(acc: Vec<f64>, mass: &[f64]) -> Vec<f64> {
    acc.into_iter()
        .zip(mass)
        .map(|(a, &m)| if m > 0.0 { a / m } else { 0.0 })
        .collect()
}

/// Conditional expectations `E_n(ξ∘θ_N)`, `n = 0..=N`, on a common depth.
#[derive(Clone, Debug)]
pub struct MartingaleCoordinates {
    pub depth: usize,
    pub levels: Vec<CylinderFunction>,
    /// `‖E_n‖_{L²(μ_n)}`.
    pub norms: Vec<f64>,
    /// Largest deviation between `E_n` and the one-step average of `E_{n+1}`.
    pub tower_residual: f64,
}

impl MartingaleCoordinates {
    /// Largest decrease `‖E_n‖ - ‖E_{n+1}‖` (nonpositive when monotone).
    pub fn norm_decrease(&self) -> f64 {
        self.norms
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A finite path record: `θ₀` truncated to the base depth, followed by the
/// symbols prepended at each step (`a₁` first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSample {
    pub base: Word,
    pub prepends: Vec<u8>,
}

impl PathSample {
    /// The prepends as one string, in the order drawn.
    pub fn prepends_string(&self) -> String {
        self.base.sibling(self.prepends.clone()).to_string()
    }

    /// 1-based prepended symbols.
    pub fn prepend_symbols(&self) -> Vec<usize> {
        self.prepends.iter().map(|&a| a as usize + 1).collect()
    }

    /// `θ_n` truncated to `base depth + n`, as codes.
    fn theta_codes(&self, n: usize) -> Result<Vec<u8>> {
        if n > self.prepends.len() {
            return Err(Error::Invalid(format!(
                "sample has {} steps, level {n} requested",
                self.prepends.len()
            )));
        }
        let mut w: Vec<u8> = self.prepends[..n].iter().rev().copied().collect();
        w.extend_from_slice(self.base.codes());
        Ok(w)
    }

    /// `θ_n` truncated to `base depth + n`.
    pub fn theta(&self, n: usize) -> Result<Word> {
        self.theta_codes(n).map(|c| self.base.sibling(c))
    }
}

/// Monte Carlo summary for one level.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalReport {
    pub n: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub depth: usize,
    /// Largest `|empirical - exact|` over the cylinders.
    pub max_dev: f64,
    /// Largest `3 sqrt(p (1 - p) / N)` over the cylinders.
    pub sigma_bound: f64,
    /// Largest deviation in units of its own standard deviation.
    pub worst_z: f64,
    /// Every deviation within its own 3σ bound.
    pub pass: bool,
}

/// One row of the prepend table: allowed symbols, the successor state for
/// each, and their probabilities.
#[derive(Clone, Debug)]
struct Row {
    moves: Vec<(u8, usize)>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

/// Exact sampler on the working depth `max(base depth, kernel depth)`.
#[derive(Clone, Debug)]
pub struct Sampler {
    k: usize,
    steps: usize,
    base_depth: usize,
    work_depth: usize,
    words: Vec<Vec<u8>>,
    base: WeightedIndex<f64>,
    rows: Vec<Option<Row>>,
}

impl Sampler {
    fn new(pm: &PathMeasure, steps: usize, base_depth: usize) -> Result<Self> {
        if base_depth == 0 {
            return Err(Error::DepthTooShallow { required: 1, actual: 0 });
        }
        let shift = pm.shift().clone();
        let work_depth = base_depth.max(pm.weight.depth()).max(pm.kernel_depth());
        let layer = shift.layer(work_depth);
        let mut words = Vec::with_capacity(layer.len());
        layer.for_each(|_, w| words.push(w.to_vec()));

        let mu0 = pm.marginal(0).masses_at(work_depth);
        let base = WeightedIndex::new(mu0.values()).map_err(|_| Error::ZeroMassConditioning {
            word: String::new(),
            level: 0,
        })?;

        // μ_1([a w]) / μ_0([w]); the same ratio holds at every step.
        let mu1 = pm.marginal(1).masses_at(work_depth + 1);
        let upper = shift.layer(work_depth + 1);
        let mut aw = Vec::with_capacity(work_depth + 1);
        let rows = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if mu0.values()[i] <= 0.0 {
                    return None;
                }
                let mut moves = Vec::new();
                let mut weights = Vec::new();
                for a in shift.preimages(w[0]) {
                    aw.clear();
                    aw.push(a);
                    aw.extend_from_slice(w);
                    let mass = mu1.values()[upper.rank(&aw).expect("admissible")];
                    let next = layer.rank(&aw[..work_depth]).expect("admissible prefix");
                    moves.push((a, next));
                    weights.push(mass / mu0.values()[i]);
                }
                let dist = WeightedIndex::new(&weights).ok()?;
                let total: f64 = weights.iter().sum();
                let probs = weights.iter().map(|w| w / total).collect();
                Some(Row { moves, probs, dist })
            })
            .collect();
        Ok(Sampler {
            k: shift.alphabet_size(),
            steps,
            base_depth,
            work_depth,
            words,
            base,
            rows,
        })
    }

    pub fn work_depth(&self) -> usize {
        self.work_depth
    }

    /// `(symbol, probability)` pairs for the next prepend from a state whose
    /// first `work_depth` symbols are `w`; `None` on zero-mass states.
    pub fn prepend_distribution(&self, w: &Word) -> Option<Vec<(usize, f64)>> {
        let codes = w.codes().get(..self.work_depth)?;
        let state = self.words.iter().position(|x| x.as_slice() == codes)?;
        let row = self.rows[state].as_ref()?;
        Some(
            row.moves
                .iter()
                .zip(&row.probs)
                .map(|(&(a, _), &p)| (a as usize + 1, p))
                .collect(),
        )
    }

    /// Sample `sample_id` of the run with `seed`.
    pub fn sample(&self, seed: u64, sample_id: u64) -> Result<PathSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample_id);
        let mut state = self.base.sample(&mut rng);
        let base = Word::from_codes(self.words[state][..self.base_depth].to_vec(), self.k);
        let mut prepends = Vec::with_capacity(self.steps);
        for level in 0..self.steps {
            let row = self.rows[state]
                .as_ref()
                .ok_or_else(|| Error::ZeroMassConditioning {
                    word: format_codes(&self.words[state], self.k),
                    level,
                })?;
            let (a, next) = row.moves[row.dist.sample(&mut rng)];
            prepends.push(a);
            state = next;
        }
        Ok(PathSample { base, prepends })
    }

    /// Samples `0..count` on a pool of `workers` threads, in sample order.
    pub fn sample_many(&self, count: usize, seed: u64, workers: usize) -> Result<Vec<PathSample>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..count as u64)
                .into_par_iter()
                .map(|i| self.sample(seed, i))
                .collect()
        })
    }
}
