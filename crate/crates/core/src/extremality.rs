//! Conditional expectations onto `r⁻¹(B)` and the relative ergodicity test.
//!
//! A fixed point `μ₀` of `T_V` is extremal exactly when the only bounded
//! solutions of `E_{μ₀}(V f) = E_{μ₀}(V) · f∘r` are constants. Tested against
//! the indicator of `r⁻¹[w]` this reads
//!
//! ```text
//! Σ_a ∫_[a w] V dμ₀ · (f((a w)|d) - f(w)) = 0
//! ```
//!
//! for every depth-`d` word `w`, a finite linear system in the values of `f`.
//! Any other solution `f₁ >= 0` splits `μ₀` into the fixed points `f₁ dμ₀`
//! and `(1 - λ f₁)/(1 - λ) dμ₀`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::{self, Measure, RawMeasure};
use crate::shift::CylinderFunction;

/// Relative singular-value cut for the null space of the test system.
pub const NULL_RELATIVE: f64 = 1e-10;

/// `g̃` at `depth` with `E_{μ₀}(V g) = g̃∘r`:
///
/// ```text
/// g̃(w) = Σ_a ∫_[a w] V g dμ₀ / Σ_a μ₀([a w])
/// ```
///
/// and 0 where the denominator vanishes. Needs `depth >= max(depth(V),
/// depth(g)) - 1`; a raw `μ₀` must be known at depth `depth + 1`.
pub fn conditional_expectation(
    mu0: &Measure,
    weight: &CylinderFunction,
    g: &CylinderFunction,
    depth: usize,
) -> Result<CylinderFunction> {
    let vg = weight.mul(g)?;
    let required = vg.depth().saturating_sub(1).max(1);
    if depth < required {
        return Err(Error::DepthTooShallow {
            required,
            actual: depth,
        });
    }
    let numerator = back_sums(&mu0.weighted_masses(&vg, depth + 1)?);
    let denominator = back_sums(&mu0.masses_at(depth + 1)?);
    numerator.zip_with(&denominator, |n, d| if d > 0.0 { n / d } else { 0.0 })
}

/// `w ↦ Σ_a m([a w])` for a table of depth `d + 1`.
fn back_sums(masses: &CylinderFunction) -> CylinderFunction {
    let shift = masses.shift().clone();
    let lookup = masses.lookup();
    let mut aw = Vec::new();
    CylinderFunction::from_fn(shift.clone(), masses.depth() - 1, |w| {
        aw.clear();
        aw.push(0);
        aw.extend_from_slice(w);
        shift
            .preimages(w[0])
            .map(|a| {
                aw[0] = a;
                lookup.get(&aw).expect("admissible")
            })
            .sum()
    })
}

/// Result of the depth-`d` relative ergodicity test.
#[derive(Clone, Debug, Serialize)]
pub struct ErgodicityReport {
    pub depth: usize,
    pub solution_dim: usize,
    #[serde(skip)]
    pub basis: Vec<CylinderFunction>,
    pub extremal_certificate: bool,
    /// Singular values of the test system, decreasing.
    pub singular_values: Vec<f64>,
}

/// Residual of the fixed-point hypothesis at the depth where it is decided.
fn fixed_point_residual(weight: &CylinderFunction, mu0: &Measure) -> Result<f64> {
    let depth = match mu0 {
        Measure::Density(d) => measure::certifying_depth(weight, d),
        Measure::Raw(raw) => raw.depth().saturating_sub(1).max(1),
    };
    measure::check_fixed_point(weight, mu0, depth)
}

fn require_fixed_point(weight: &CylinderFunction, mu0: &Measure, tol: f64) -> Result<()> {
    let residual = fixed_point_residual(weight, mu0)?;
    if !(residual <= tol) {
        return Err(Error::NotFixedPoint { residual });
    }
    Ok(())
}

/// Solves the weak relative ergodicity system over depth-`depth` functions
/// on the support of `μ₀`. `μ₀` must be a fixed point of `T_V` within `tol`.
pub fn relative_ergodicity_dimension(
    mu0: &Measure,
    weight: &CylinderFunction,
    depth: usize,
    tol: f64,
) -> Result<ErgodicityReport> {
    if depth == 0 {
        return Err(Error::DepthTooShallow { required: 1, actual: 0 });
    }
    require_fixed_point(weight, mu0, tol)?;
    let shift = weight.shift().clone();
    let mass = mu0.masses_at(depth)?;
    let coupling = mu0.weighted_masses(weight, depth + 1)?;

    let support: Vec<usize> = (0..mass.values().len()).filter(|&i| mass.values()[i] > 0.0).collect();
    let mut column = vec![usize::MAX; mass.values().len()];
    for (j, &i) in support.iter().enumerate() {
        column[i] = j;
    }

    let layer = shift.layer(depth);
    let upper = shift.layer(depth + 1);
    let mut matrix = nalgebra::DMatrix::zeros(layer.len(), support.len());
    // row of w: Σ_a c(a, w) (f((a w)|d) - f(w)); r⁻¹[w] carries mass μ₀([w])
    upper.for_each(|idx, aw| {
        let c = coupling.values()[idx];
        if c == 0.0 {
            return;
        }
        let w = layer.rank(&aw[1..]).expect("admissible suffix");
        let head = layer.rank(aw).expect("admissible prefix");
        matrix[(w, column[head])] += c;
        if column[w] != usize::MAX {
            matrix[(w, column[w])] -= c;
        }
    });

    let ns = linalg::null_space(&matrix, |largest| NULL_RELATIVE * largest);
    let basis = ns
        .basis
        .iter()
        .map(|v| {
            let mut values = vec![0.0; mass.values().len()];
            for (j, &i) in support.iter().enumerate() {
                values[i] = v[j];
            }
            CylinderFunction::from_values(shift.clone(), depth, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut singular_values = ns.singular_values;
    singular_values.truncate(support.len());
    Ok(ErgodicityReport {
        depth,
        solution_dim: basis.len(),
        extremal_certificate: basis.len() == 1,
        basis,
        singular_values,
    })
}

/// `μ₀ = λ μ₁ + (1 - λ) μ₂` with `μᵢ = fᵢ dμ₀`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub lambda: f64,
    pub f1: CylinderFunction,
    pub f2: CylinderFunction,
    pub mu1: Measure,
    pub mu2: Measure,
}

impl Decomposition {
    /// Largest deviation of `λ μ₁ + (1 - λ) μ₂` from `μ₀` on cylinders of
    /// `depth`.
    pub fn recombination_residual(&self, mu0: &Measure, depth: usize) -> Result<f64> {
        let mixed = self
            .mu1
            .masses_at(depth)?
            .scale(self.lambda)
            .add(&self.mu2.masses_at(depth)?.scale(1.0 - self.lambda))?;
        mixed.max_abs_diff(&mu0.masses_at(depth)?)
    }

    /// Fixed-point residuals of both components.
    pub fn component_residuals(&self, weight: &CylinderFunction) -> Result<(f64, f64)> {
        Ok((
            fixed_point_residual(weight, &self.mu1)?,
            fixed_point_residual(weight, &self.mu2)?,
        ))
    }
}

/// Splits `μ₀` along a nonconstant solution of the depth-`depth` system, or
/// returns `None` when only constants solve it.
///
/// `f₁` comes from the basis vector with the largest spread about its
/// `μ₀`-mean, shifted to vanish at its minimum on the support and scaled to
/// `∫ f₁ dμ₀ = μ₀(X)`. Then `λ = 1 / (2 sup f₁)` and
/// `f₂ = (1 - λ f₁) / (1 - λ)`.
pub fn decompose(
    mu0: &Measure,
    weight: &CylinderFunction,
    depth: usize,
    tol: f64,
) -> Result<Option<Decomposition>> {
    let report = relative_ergodicity_dimension(mu0, weight, depth, tol)?;
    if report.solution_dim <= 1 {
        return Ok(None);
    }
    let mass = mu0.masses_at(depth)?;
    let total = mass.total();
    let on_support = |f: &CylinderFunction| -> Vec<f64> {
        f.values()
            .iter()
            .zip(mass.values())
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, _)| v)
            .collect()
    };
    let spread = |f: &CylinderFunction| -> f64 {
        let mean = f.values().iter().zip(mass.values()).map(|(v, m)| v * m).sum::<f64>() / total;
        on_support(f).iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    };
    let chosen = report
        .basis
        .iter()
        .max_by(|a, b| spread(a).total_cmp(&spread(b)))
        .expect("at least two basis vectors");
    let low = on_support(chosen).into_iter().fold(f64::INFINITY, f64::min);
    let shifted = chosen.map(|v| (v - low).max(0.0));
    let integral: f64 = shifted.values().iter().zip(mass.values()).map(|(v, m)| v * m).sum();
    if !(integral > 0.0) {
        return Err(Error::Invalid("solution is constant on the support".into()));
    }
    let f1 = shifted.scale(total / integral);
    let lambda = 1.0 / (2.0 * f1.sup());
    let f2 = f1.map(|v| (1.0 - lambda * v) / (1.0 - lambda));
    let mu1 = weighted(mu0, &f1)?;
    let mu2 = weighted(mu0, &f2)?;
    Ok(Some(Decomposition {
        lambda,
        f1,
        f2,
        mu1,
        mu2,
    }))
}

/// `g dμ` in the representation of `μ`.
fn weighted(mu: &Measure, g: &CylinderFunction) -> Result<Measure> {
    Ok(match mu {
        Measure::Density(d) => Measure::Density(d.weighted_by(g)?),
        Measure::Raw(raw) => Measure::Raw(RawMeasure::new(mu.weighted_masses(g, raw.depth())?)?),
    })
}
