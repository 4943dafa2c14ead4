//! Finite measures on `X(A)` and the transformer `T_V(μ) = (V dμ) ∘ r⁻¹`.
//!
//! Two representations are used. A [`RawMeasure`] is a table of cylinder
//! masses at one depth and determines nothing finer. A [`DensityMeasure`] is
//! `f dρ` for a cylinder function `f` and a reference measure `ρ`, and is
//! evaluable at every depth. On densities `T_V(f dρ_W) = R_{VW}(f) dρ_W`; on
//! raw tables
//!
//! ```text
//! T_V(μ)([w]) = Σ_{a : A(a, w1) = 1} ∫_{[a w]} V dμ
//! ```
//!
//! which consumes one symbol of depth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reference::MarkovMeasure;
use crate::shift::CylinderFunction;
use crate::transfer::{self, FixedFunctional, HIteration, HStatus};

/// Iterates whose accumulated mass falls below this violate the two-sided
/// mass bounds needed for the averaging solver.
pub const MASS_COLLAPSE: f64 = 1e-12;

/// Cylinder masses at a single depth.
#[derive(Clone, Debug)]
pub struct RawMeasure {
    masses: CylinderFunction,
}

impl RawMeasure {
    pub fn new(masses: CylinderFunction) -> Result<Self> {
        if let Some((word, value)) = masses.first_negative() {
            return Err(Error::NegativeMass { word, value });
        }
        if masses.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("masses must be finite".into()));
        }
        Ok(RawMeasure { masses })
    }

    pub fn depth(&self) -> usize {
        self.masses.depth()
    }

    pub fn masses(&self) -> &CylinderFunction {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.total()
    }

    /// Masses at `depth <= self.depth()`; deeper requests are refused since
    /// the table does not determine them.
    pub fn masses_at(&self, depth: usize) -> Result<CylinderFunction> {
        self.masses.aggregate(depth)
    }

    /// `α μ + β ν`.
    pub fn combine(alpha: f64, mu: &RawMeasure, beta: f64, nu: &RawMeasure) -> Result<RawMeasure> {
        RawMeasure::new(mu.masses.scale(alpha).add(&nu.masses.scale(beta))?)
    }
}

/// The measure `f dρ`.
#[derive(Clone, Debug)]
pub struct DensityMeasure {
    density: CylinderFunction,
    reference: MarkovMeasure,
}

impl DensityMeasure {
    pub fn new(density: CylinderFunction, reference: MarkovMeasure) -> Result<Self> {
        if density.shift() != reference.shift() {
            return Err(Error::ShiftMismatch);
        }
        if let Some((word, value)) = density.first_negative() {
            return Err(Error::NegativeMass { word, value });
        }
        Ok(DensityMeasure { density, reference })
    }

    /// `ρ` itself, as the density `1 dρ`.
    pub fn reference_itself(reference: MarkovMeasure) -> Self {
        let one = CylinderFunction::constant(reference.shift().clone(), 1, 1.0);
        DensityMeasure {
            density: one,
            reference,
        }
    }

    /// Reads a mass table as the density `mass([w]) / ρ([w])`. This fixes
    /// one particular refinement of the table and is never done implicitly.
    pub fn from_raw(raw: &RawMeasure, reference: MarkovMeasure) -> Result<Self> {
        let rho = reference.masses(raw.depth());
        let mut bad = None;
        let density = raw.masses().zip_with(&rho, |m, r| {
            if r > 0.0 {
                m / r
            } else {
                if m > 0.0 {
                    bad = Some(());
                }
                0.0
            }
        })?;
        if bad.is_some() {
            let (word, _) = raw
                .masses()
                .entries()
                .into_iter()
                .zip(rho.values())
                .find(|((_, m), &r)| *m > 0.0 && r <= 0.0)
                .map(|(e, _)| e)
                .expect("found above");
            return Err(Error::NotAbsolutelyContinuous {
                word: word.to_string(),
            });
        }
        DensityMeasure::new(density, reference)
    }

    pub fn density(&self) -> &CylinderFunction {
        &self.density
    }

    pub fn reference(&self) -> &MarkovMeasure {
        &self.reference
    }

    /// Cylinder masses at any depth.
    pub fn masses_at(&self, depth: usize) -> CylinderFunction {
        let fine = depth.max(self.density.depth());
        let masses = self
            .reference
            .masses(fine)
            .mul(&self.density)
            .expect("same shift");
        masses.aggregate(depth).expect("depth within fine depth")
    }

    pub fn total_mass(&self) -> f64 {
        self.masses_at(1).total()
    }

    /// `∫ g dμ`.
    pub fn integrate(&self, g: &CylinderFunction) -> Result<f64> {
        let weighted = self.density.mul(g)?;
        Ok(self.reference.integrate(&weighted))
    }

    /// `g dμ = (g f) dρ`.
    pub fn weighted_by(&self, g: &CylinderFunction) -> Result<DensityMeasure> {
        DensityMeasure::new(self.density.mul(g)?, self.reference.clone())
    }

    pub fn scale(&self, c: f64) -> DensityMeasure {
        DensityMeasure {
            density: self.density.scale(c),
            reference: self.reference.clone(),
        }
    }

    pub fn to_raw(&self, depth: usize) -> RawMeasure {
        RawMeasure {
            masses: self.masses_at(depth),
        }
    }
}

/// Either representation.
#[derive(Clone, Debug)]
pub enum Measure {
    Raw(RawMeasure),
    Density(DensityMeasure),
}

impl Measure {
    pub fn masses_at(&self, depth: usize) -> Result<CylinderFunction> {
        match self {
            Measure::Raw(raw) => raw.masses_at(depth),
            Measure::Density(d) => Ok(d.masses_at(depth)),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Measure::Raw(raw) => raw.total_mass(),
            Measure::Density(d) => d.total_mass(),
        }
    }

    pub fn shift(&self) -> &std::sync::Arc<crate::shift::Subshift> {
        match self {
            Measure::Raw(raw) => raw.masses().shift(),
            Measure::Density(d) => d.density().shift(),
        }
    }

    /// `∫ g dμ`; raw measures need `depth(g) <= depth(μ)`.
    pub fn integrate(&self, g: &CylinderFunction) -> Result<f64> {
        match self {
            Measure::Raw(raw) => {
                if g.depth() > raw.depth() {
                    return Err(Error::DepthTooShallow {
                        required: g.depth(),
                        actual: raw.depth(),
                    });
                }
                let g = g.promote(raw.depth())?;
                Ok(raw
                    .masses()
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(m, v)| m * v)
                    .sum())
            }
            Measure::Density(d) => d.integrate(g),
        }
    }

    /// Masses of `g dμ` at `depth` for a possibly signed `g`; raw measures need
    /// `depth(μ) >= max(depth, depth(g))`.
    pub fn weighted_masses(&self, g: &CylinderFunction, depth: usize) -> Result<CylinderFunction> {
        match self {
            Measure::Raw(raw) => {
                let fine = depth.max(g.depth());
                if fine > raw.depth() {
                    return Err(Error::DepthTooShallow {
                        required: fine,
                        actual: raw.depth(),
                    });
                }
                raw.masses().mul(g)?.aggregate(depth)
            }
            Measure::Density(d) => {
                // signed g is allowed here, so no intermediate density measure
                let fine = depth.max(g.depth()).max(d.density.depth());
                d.reference
                    .masses(fine)
                    .mul(&d.density)?
                    .mul(g)?
                    .aggregate(depth)
            }
        }
    }
}

impl From<RawMeasure> for Measure {
    fn from(raw: RawMeasure) -> Self {
        Measure::Raw(raw)
    }
}

impl From<DensityMeasure> for Measure {
    fn from(d: DensityMeasure) -> Self {
        Measure::Density(d)
    }
}

/// The weight whose Ruelle operator realizes `T_V` on densities with respect
/// to `ρ`: `V` itself for `ρ_A`, `V W` for a weighted reference `ρ_W`.
pub fn effective_weight(weight: &CylinderFunction, reference: &MarkovMeasure) -> Result<CylinderFunction> {
    match reference.weight() {
        Some(w) => transfer::product_weight(weight, w),
        None => {
            weight.check_nonnegative()?;
            Ok(weight.clone())
        }
    }
}

/// `T_V(f dρ) = R_V(f) dρ` (with `R_{VW}` for a weighted reference).
pub fn apply_tv_density(weight: &CylinderFunction, mu: &DensityMeasure) -> Result<DensityMeasure> {
    let eff = effective_weight(weight, mu.reference())?;
    let density = transfer::apply_transfer(&eff, mu.density())?;
    Ok(DensityMeasure {
        density,
        reference: mu.reference().clone(),
    })
}

/// `T_V(μ)` on a mass table of depth `d`, giving masses at depth `d - 1`.
pub fn apply_tv_raw(weight: &CylinderFunction, mu: &RawMeasure) -> Result<RawMeasure> {
    weight.check_nonnegative()?;
    if weight.shift() != mu.masses().shift() {
        return Err(Error::ShiftMismatch);
    }
    let required = weight.depth().max(2);
    let d = mu.depth();
    if d < required {
        return Err(Error::DepthTooShallow {
            required,
            actual: d,
        });
    }
    let shift = weight.shift().clone();
    let v = weight.lookup();
    let m = mu.masses().lookup();
    let mut aw = Vec::with_capacity(d);
    let masses = CylinderFunction::from_fn(shift.clone(), d - 1, |w| {
        aw.clear();
        aw.push(0);
        aw.extend_from_slice(w);
        shift
            .preimages(w[0])
            .map(|a| {
                aw[0] = a;
                v.get(&aw).expect("weight depth fits") * m.get(&aw).expect("admissible")
            })
            .sum()
    });
    Ok(RawMeasure { masses })
}

pub fn apply_tv(weight: &CylinderFunction, mu: &Measure) -> Result<Measure> {
    match mu {
        Measure::Raw(raw) => apply_tv_raw(weight, raw).map(Measure::Raw),
        Measure::Density(d) => apply_tv_density(weight, d).map(Measure::Density),
    }
}

/// `max |∫ f dμ₀ - ∫ f∘r · V dμ₀|` over indicators `f` of cylinders of every
/// depth `1..=depth`. Raw measures need depth at least
/// `max(depth + 1, depth(V))`.
pub fn check_fixed_point(weight: &CylinderFunction, mu0: &Measure, depth: usize) -> Result<f64> {
    let image = match mu0 {
        Measure::Density(d) => Measure::Density(apply_tv_density(weight, d)?),
        Measure::Raw(raw) => {
            let required = (depth + 1).max(weight.depth());
            if raw.depth() < required {
                return Err(Error::DepthTooShallow {
                    required,
                    actual: raw.depth(),
                });
            }
            Measure::Raw(apply_tv_raw(weight, raw)?)
        }
    };
    let mut worst: f64 = 0.0;
    for d in 1..=depth {
        let before = mu0.masses_at(d)?;
        let after = image.masses_at(d)?;
        worst = worst.max(before.max_abs_diff(&after)?);
    }
    Ok(worst)
}

/// Depth at which equality of two densities' masses certifies equality at
/// every depth.
pub(crate) fn certifying_depth(weight: &CylinderFunction, mu: &DensityMeasure) -> usize {
    transfer::closed_depth(weight.depth()).max(mu.density().depth())
}

/// `μ_n(X) = ∫ V^(n) dμ₀` for `n = 1..=n_max`.
pub fn masses_along_orbit(weight: &CylinderFunction, mu0: &Measure, n_max: usize) -> Result<Vec<f64>> {
    (1..=n_max)
        .map(|n| mu0.integrate(&weight.weight_product(n)?))
        .collect()
}

/// Everything computed on the way to `μ₀ = h_V dρ`.
#[derive(Clone, Debug)]
pub struct FixedDensitySolution {
    pub mu0: DensityMeasure,
    pub iteration: HIteration,
    pub nu: Option<FixedFunctional>,
    /// `ν_V(h_V)` before rescaling, when `ν_V` exists.
    pub nu_of_h: Option<f64>,
}

/// `μ₀ = h_V dρ`, a fixed point of `T_V`.
///
/// `h_V` comes from the monotone iteration; it is scaled so that
/// `ν_V(h_V) = 1` when `ν_V` exists and pairs positively, and to unit total
/// mass otherwise.
pub fn solve_fixed_density(weight: &CylinderFunction, reference: &MarkovMeasure) -> Result<FixedDensitySolution> {
    solve_fixed_density_with(weight, reference, transfer::DEFAULT_TOL, transfer::DEFAULT_MAX_ITER)
}

/// [`solve_fixed_density`] with explicit stopping rule for the `h_V` iteration.
pub fn solve_fixed_density_with(
    weight: &CylinderFunction,
    reference: &MarkovMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<FixedDensitySolution> {
    let eff = effective_weight(weight, reference)?;
    let iteration = transfer::iterate_to_h(&eff, tol, max_iter)?;
    if iteration.status == HStatus::Degenerate {
        return Err(Error::DegenerateH);
    }
    let nu = transfer::left_fixed_functional(&eff)?;
    let nu_of_h = nu
        .as_ref()
        .map(|f| transfer::pairing(&f.nu, &iteration.h))
        .transpose()?;
    let unscaled = DensityMeasure::new(iteration.h.clone(), reference.clone())?;
    let scale = match nu_of_h {
        Some(p) if p > 0.0 => 1.0 / p,
        _ => 1.0 / unscaled.total_mass(),
    };
    Ok(FixedDensitySolution {
        mu0: unscaled.scale(scale),
        iteration,
        nu,
        nu_of_h,
    })
}

pub fn fixed_density_measure(weight: &CylinderFunction, reference: &MarkovMeasure) -> Result<DensityMeasure> {
    solve_fixed_density(weight, reference).map(|s| s.mu0)
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingSource {
    /// The last normalized iterate met the tolerance.
    Iterate,
    /// The Cesàro average of the normalized iterates met it.
    CesaroAverage,
}

#[derive(Clone, Debug)]
pub struct AveragingResult {
    pub mu0: DensityMeasure,
    pub residual: f64,
    pub n_used: usize,
    pub source: AveragingSource,
    /// `∫ V^(n) dμ_seed` for `n = 1..=n_used`.
    pub mass_bounds: Vec<f64>,
}

/// Renormalized iteration `μ ↦ T_V(μ) / T_V(μ)(X)` from a density seed,
/// tracking Cesàro averages, until a unit-mass fixed point of `T_V` is found.
///
/// The product of the per-step masses is `∫ V^(n) dμ_seed`; when it drops
/// below [`MASS_COLLAPSE`] the solver stops with [`Error::MassCollapse`].
pub fn averaging_fixed_point(
    weight: &CylinderFunction,
    seed: &DensityMeasure,
    max_iter: usize,
    tol: f64,
) -> Result<AveragingResult> {
    let seed_mass = seed.total_mass();
    if !(seed_mass > 0.0) {
        return Err(Error::MassCollapse {
            iteration: 0,
            mass: seed_mass,
            normalized_residual: f64::NAN,
        });
    }
    let depth = certifying_depth(weight, seed);
    let mut current = seed.scale(1.0 / seed_mass);
    let mut accumulated = seed_mass;
    let mut bounds = Vec::new();
    let mut sum = CylinderFunction::constant(seed.density().shift().clone(), depth, 0.0);
    let mut last_residual = f64::INFINITY;
    for n in 1..=max_iter {
        let image = apply_tv_density(weight, &current)?;
        let step = image.total_mass();
        accumulated *= step;
        bounds.push(accumulated);
        if !(step > 0.0) || accumulated < MASS_COLLAPSE {
            let normalized_residual = if step > 0.0 {
                current
                    .masses_at(depth)
                    .max_abs_diff(&image.scale(1.0 / step).masses_at(depth))?
            } else {
                f64::NAN
            };
            return Err(Error::MassCollapse {
                iteration: n,
                mass: accumulated,
                normalized_residual,
            });
        }
        current = image.scale(1.0 / step);
        let residual = check_fixed_point(weight, &Measure::Density(current.clone()), depth)?;
        sum = sum.add(current.density())?;
        if residual < tol {
            return Ok(AveragingResult {
                mu0: current,
                residual,
                n_used: n,
                source: AveragingSource::Iterate,
                mass_bounds: bounds,
            });
        }
        let average = DensityMeasure::new(sum.scale(1.0 / n as f64), seed.reference().clone())?;
        let avg_residual = check_fixed_point(weight, &Measure::Density(average.clone()), depth)?;
        if avg_residual < tol {
            return Ok(AveragingResult {
                mu0: average,
                residual: avg_residual,
                n_used: n,
                source: AveragingSource::CesaroAverage,
                mass_bounds: bounds,
            });
        }
        last_residual = residual.min(avg_residual);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}
