//! Strongly invariant reference measures.
//!
//! Applying strong invariance to the indicator of `[a w]` forces the
//! front-extension rule
//!
//! ```text
//! ρ([a w]) = A(a, w1) / c(w1) · ρ([w])
//! ```
//!
//! so the measure is determined by its symbol masses `q`, and
//! back-consistency turns into `q = M q` with the column-stochastic
//! `M(i, j) = A(i, j) / c(j)`.
//!
//! The same machinery carries a weighted variant `ρ_W` (a probability measure
//! with `ρ_W ∘ R_W = ρ_W` for a weight with `R_W(1) = 1`), whose front
//! extension picks up the factor `W(a w)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::shift::{code, CylinderFunction, Subshift, Word};
use crate::transfer;

/// Singular values of `M - I` at or below this count as null directions.
pub const NULL_SINGULAR_VALUE: f64 = 1e-10;
/// Symbol masses at or below this are treated as zero.
const ROUNDOFF_MASS: f64 = 1e-14;

/// A Markov measure given by base cylinder masses and a front-extension rule.
#[derive(Clone, Debug)]
pub struct MarkovMeasure {
    shift: Arc<Subshift>,
    weight: Option<CylinderFunction>,
    base: CylinderFunction,
    non_unique: bool,
}

impl MarkovMeasure {
    /// `ρ_A` from given symbol masses, without checking that they form a
    /// fixed vector. Used to study perturbed measures.
    pub fn from_symbol_masses(shift: Arc<Subshift>, q: Vec<f64>) -> Result<Self> {
        let base = CylinderFunction::from_values(shift.clone(), 1, q)?;
        if let Some((word, value)) = base.first_negative() {
            return Err(Error::NegativeMass { word, value });
        }
        Ok(MarkovMeasure {
            shift,
            weight: None,
            base,
            non_unique: false,
        })
    }

    /// `ρ_W` for a weight with `R_W(1) = 1`: the probability-normalized left
    /// fixed vector of the transfer matrix at the weight's closed depth,
    /// extended to all depths by the weighted front-extension rule.
    pub fn weighted(weight: &CylinderFunction) -> Result<Self> {
        weight.check_nonnegative()?;
        let one = CylinderFunction::constant(weight.shift().clone(), 1, 1.0);
        let r1 = transfer::apply_transfer(weight, &one)?;
        let deviation = r1.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        if deviation > 1e-12 {
            return Err(Error::NotNormalizedWeight { deviation });
        }
        let fixed = transfer::left_fixed_functional(weight)?.ok_or(Error::NotNormalizedWeight {
            deviation: f64::NAN,
        })?;
        Ok(MarkovMeasure {
            shift: weight.shift().clone(),
            weight: Some(weight.clone()),
            base: fixed.nu,
            non_unique: fixed.non_unique,
        })
    }

    pub fn shift(&self) -> &Arc<Subshift> {
        &self.shift
    }

    /// The weight `W` of a weighted reference; `None` for `ρ_A` (`W ≡ 1`).
    pub fn weight(&self) -> Option<&CylinderFunction> {
        self.weight.as_ref()
    }

    /// True when the fixed vector was not unique and a mixture was chosen.
    pub fn is_non_unique(&self) -> bool {
        self.non_unique
    }

    /// Single-symbol masses `q(j) = ρ([j])`.
    pub fn symbol_masses(&self) -> Vec<f64> {
        self.base
            .aggregate(1)
            .expect("base depth is at least 1")
            .into_values()
    }

    pub fn cylinder_mass(&self, word: &Word) -> Result<f64> {
        if !self.shift.is_admissible(word.codes()) {
            return Err(Error::InadmissibleWord(word.to_string()));
        }
        Ok(self.mass_of(word.codes()))
    }

    /// Mass of an admissible word given by 0-based codes.
    pub(crate) fn mass_of(&self, w: &[u8]) -> f64 {
        let b = self.base.depth();
        if w.len() <= b {
            return self.masses(w.len()).lookup().get(w).expect("admissible");
        }
        let base = self.base.lookup();
        let weight = self.weight.as_ref().map(|f| f.lookup());
        let tail = w.len() - b;
        let mut mass = base.get(&w[tail..]).expect("admissible");
        for i in (0..tail).rev() {
            mass *= self.front_factor(w[i], &w[i..], weight.as_ref());
        }
        mass
    }

    #[inline]
    fn front_factor(
        &self,
        a: u8,
        aw: &[u8],
        weight: Option<&crate::shift::Lookup<'_, f64>>,
    ) -> f64 {
        let next = aw[1];
        if !self.shift.allowed(a, next) {
            return 0.0;
        }
        let w = weight.map_or(1.0, |l| l.get(aw).expect("weight depth fits"));
        w / self.shift.column_sum(next) as f64
    }

    /// `∫ f dρ` for a cylinder function `f`.
    pub fn integrate(&self, f: &CylinderFunction) -> f64 {
        let masses = self.masses(f.depth());
        masses.values().iter().zip(f.values()).map(|(m, v)| m * v).sum()
    }

    /// All cylinder masses at `depth`, in lexicographic word order.
    pub fn masses(&self, depth: usize) -> CylinderFunction {
        let b = self.base.depth();
        if depth <= b {
            return self.base.aggregate(depth).expect("depth within base");
        }
        // extend one symbol at a time: ρ([a w]) from ρ([w])
        let mut current = self.base.clone();
        while current.depth() < depth {
            let weight = self.weight.as_ref().map(|f| f.lookup());
            let prev = current.lookup();
            current = CylinderFunction::from_fn(self.shift.clone(), current.depth() + 1, |aw| {
                prev.get(&aw[1..]).expect("admissible suffix")
                    * self.front_factor(aw[0], aw, weight.as_ref())
            });
        }
        current
    }
}

/// Result of the direct fixed-vector solve for `M = A / c`.
#[derive(Clone, Debug)]
pub struct FixedVector {
    pub q: Vec<f64>,
    /// Dimension of the eigenvalue-1 eigenspace of `M`.
    pub null_dimension: usize,
}

fn stochastic_matrix(shift: &Subshift) -> DMatrix<f64> {
    let k = shift.alphabet_size();
    DMatrix::from_fn(k, k, |i, j| {
        if shift.allowed(code(i), code(j)) {
            1.0 / shift.column_sum(code(j)) as f64
        } else {
            0.0
        }
    })
}

/// Solves `(M - I) q = 0`, `Σ q = 1` directly. For a degenerate eigenspace
/// returns the uniform mixture of the stationary vectors of the closed
/// communicating classes.
pub fn fixed_vector(shift: &Subshift) -> FixedVector {
    let k = shift.alphabet_size();
    let m = stochastic_matrix(shift);
    let shifted = &m - DMatrix::identity(k, k);
    let null_dimension = linalg::null_space(&shifted, |_| NULL_SINGULAR_VALUE).basis.len();
    let q = if null_dimension <= 1 {
        solve_normalized(&shifted)
    } else {
        class_mixture(shift, &m)
    };
    // transient symbols carry exactly zero mass; drop solver roundoff
    let mut q: Vec<f64> = q.into_iter().map(|v| if v > ROUNDOFF_MASS { v } else { 0.0 }).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    FixedVector { q, null_dimension }
}

fn solve_normalized(shifted: &DMatrix<f64>) -> Vec<f64> {
    let k = shifted.ncols();
    let mut system = DMatrix::zeros(k + 1, k);
    system.rows_mut(0, k).copy_from(shifted);
    system.row_mut(k).fill(1.0);
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    linalg::least_squares(&system, &rhs).iter().copied().collect()
}

/// Stationary vectors of the closed classes of the chain `j -> i` when
/// `A(i, j) = 1`, mixed with equal weights.
fn class_mixture(shift: &Subshift, m: &DMatrix<f64>) -> Vec<f64> {
    let k = shift.alphabet_size();
    // reach[j][i]: i reachable from j along j -> i edges
    let mut reach = vec![vec![false; k]; k];
    for j in 0..k {
        reach[j][j] = true;
        for i in 0..k {
            if shift.allowed(code(i), code(j)) {
                reach[j][i] = true;
            }
        }
    }
    for via in 0..k {
        for j in 0..k {
            if reach[j][via] {
                for i in 0..k {
                    if reach[via][i] {
                        reach[j][i] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; k];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for s in 0..k {
        if assigned[s] {
            continue;
        }
        let class: Vec<usize> = (0..k).filter(|&t| reach[s][t] && reach[t][s]).collect();
        for &t in &class {
            assigned[t] = true;
        }
        let closed = class
            .iter()
            .all(|&j| (0..k).all(|i| !reach[j][i] || class.contains(&i)));
        if closed {
            classes.push(class);
        }
    }
    let mut q = vec![0.0; k];
    let share = 1.0 / classes.len() as f64;
    for class in &classes {
        let n = class.len();
        let sub = DMatrix::from_fn(n, n, |a, b| m[(class[a], class[b])]) - DMatrix::identity(n, n);
        for (slot, value) in class.iter().zip(solve_normalized(&sub)) {
            q[*slot] += share * value;
        }
    }
    q
}

/// Lazy power iteration `q <- (q + M q) / 2` from the uniform vector. An
/// independent route to the fixed vector for irreducible `A`.
pub fn power_iteration_fixed_vector(shift: &Subshift, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let k = shift.alphabet_size();
    let m = stochastic_matrix(shift);
    let mut q = DVector::from_element(k, 1.0 / k as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = (&q + &m * &q) * 0.5;
        residual = (&next - &q).amax();
        q = next;
        if residual < tol {
            return Ok(q.iter().copied().collect());
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// The strongly `r_A`-invariant probability measure `ρ_A`.
///
/// For reducible `A` the eigenspace can be degenerate; the returned measure
/// then reports [`MarkovMeasure::is_non_unique`].
pub fn strongly_invariant_measure(shift: Arc<Subshift>) -> MarkovMeasure {
    let fixed = fixed_vector(&shift);
    let base = CylinderFunction::from_values(shift.clone(), 1, fixed.q)
        .expect("one mass per symbol");
    MarkovMeasure {
        shift,
        weight: None,
        base,
        non_unique: fixed.null_dimension > 1,
    }
}

/// Largest violation of strong invariance,
/// `|∫ f dρ - ∫ (1/#r⁻¹(x)) Σ_{r(y)=x} f(y) dρ(x)|`, over indicators of
/// cylinders of every depth `1..=depth`.
pub fn verify_strong_invariance(rho: &MarkovMeasure, depth: usize) -> f64 {
    let shift = rho.shift();
    let mut worst: f64 = 0.0;
    for d in 1..=depth {
        let lhs = rho.masses(d);
        // averaged indicator of [w] lives on [w2..wd], or on all of X when d = 1
        let tail_masses = if d > 1 { Some(rho.masses(d - 1)) } else { None };
        let q = rho.symbol_masses();
        let tail = tail_masses.as_ref().map(|t| t.lookup());
        shift.layer(d).for_each(|i, w| {
            let a = w[0];
            let rhs = match &tail {
                Some(tail) => {
                    let mass = tail.get(&w[1..]).expect("admissible suffix");
                    mass / shift.column_sum(w[1]) as f64
                }
                None => (0..shift.alphabet_size())
                    .map(code)
                    .filter(|&j| shift.allowed(a, j))
                    .map(|j| q[usize::from(j)] / shift.column_sum(j) as f64)
                    .sum(),
            };
            worst = worst.max((lhs.values()[i] - rhs).abs());
        });
    }
    worst
}
