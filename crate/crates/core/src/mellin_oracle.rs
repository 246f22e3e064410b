//! Complex-valued shadow of the measure algebra.
//!
//! Every Mellin exponent `s` sends measures to complex numbers, convolution
//! to multiplication and `δ_h` to `h^s`. On configuration spaces the image
//! of ω is described by operators
//!
//! ```text
//! U(A, b, c) f(z) = f(Az + b) · exp(c·z)
//! ```
//!
//! acting on polynomials, with matrix elements `⟨p|U|q⟩ = [z^p] U z^q` in
//! the monomial basis. Composition follows
//!
//! ```text
//! U(A,b,c) U(A',b',c') = exp(b·c') · U(A'A, A'b + b', Aᵀc' + c)
//! ```
//!
//! For a bordered polymorphism `P` the Mellin image of `ω_φψ` equals
//! `⟨φ|U|ψ⟩ / ψ!` for the operator returned by [`shadow_of_v`].

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bordered::{BorderedSpace, VPolymorphism};
use crate::error::{domain, structural, Result};
use crate::measure::AtomicMeasure;
use crate::poisson::Configuration;
use crate::policy::factorial;
use crate::rstar::ComplexMatrix;

type C = Complex64;

/// Row multi-indices, column multi-indices, elements.
pub type IndexedMatrix = (Vec<Vec<u32>>, Vec<Vec<u32>>, ComplexMatrix);

/// Multi-indices of `n` variables with total degree at most `degree`,
/// graded then lexicographic.
pub fn multi_indices(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0; n];
        fill_degree(&mut cur, 0, d, &mut out);
    }
    out
}

fn fill_degree(cur: &mut Vec<u32>, k: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if k + 1 >= cur.len() {
        if let Some(last) = cur.last_mut() {
            *last = left;
            out.push(cur.clone());
        } else if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for v in (0..=left).rev() {
        cur[k] = v;
        fill_degree(cur, k + 1, left - v, out);
    }
    cur[k] = 0;
}

/// Dense monomial table with precomputed products.
#[derive(Debug)]
pub struct Basis {
    n: usize,
    degree: u32,
    monomials: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    products: Vec<Vec<Option<usize>>>,
}

impl Basis {
    pub fn new(n: usize, degree: u32) -> Arc<Self> {
        let monomials = multi_indices(n, degree);
        let index: HashMap<Vec<u32>, usize> = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let products = monomials
            .iter()
            .map(|a| {
                monomials
                    .iter()
                    .map(|b| {
                        let sum: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        index.get(&sum).copied()
                    })
                    .collect()
            })
            .collect();
        Arc::new(Basis {
            n,
            degree,
            monomials,
            index,
            products,
        })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn variables(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }
}

/// Polynomial in `n` variables with every term above the basis degree
/// discarded.
#[derive(Debug, Clone)]
pub struct TruncatedPoly {
    basis: Arc<Basis>,
    coeffs: Vec<C>,
}

impl TruncatedPoly {
    pub fn zero(basis: &Arc<Basis>) -> Self {
        TruncatedPoly {
            basis: basis.clone(),
            coeffs: vec![C::new(0.0, 0.0); basis.len()],
        }
    }

    pub fn constant(basis: &Arc<Basis>, c: C) -> Self {
        let mut p = Self::zero(basis);
        p.coeffs[0] = c;
        p
    }

    /// `Σ_i a_i z_i + b`
    pub fn affine(basis: &Arc<Basis>, a: &[C], b: C) -> Self {
        let mut p = Self::constant(basis, b);
        if basis.degree >= 1 {
            for (i, &ai) in a.iter().enumerate() {
                let mut m = vec![0; basis.n];
                m[i] = 1;
                p.coeffs[basis.index[&m]] = ai;
            }
        }
        p
    }

    /// `exp(Σ c_i z_i)`, exact up to the basis degree.
    pub fn exp_linear(basis: &Arc<Basis>, c: &[C]) -> Self {
        let mut p = Self::zero(basis);
        for (k, m) in basis.monomials.iter().enumerate() {
            p.coeffs[k] = m
                .iter()
                .zip(c)
                .map(|(&e, &ci)| ci.powu(e) / factorial(e) as f64)
                .product();
        }
        p
    }

    pub fn coeff(&self, m: &[u32]) -> C {
        self.basis.index.get(m).map_or(C::new(0.0, 0.0), |&k| self.coeffs[k])
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn mul(&self, other: &TruncatedPoly) -> TruncatedPoly {
        let mut out = Self::zero(&self.basis);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == C::new(0.0, 0.0) {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                if let Some(k) = self.basis.products[i][j] {
                    out.coeffs[k] += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &TruncatedPoly) -> TruncatedPoly {
        let mut out = self.clone();
        for (x, y) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y;
        }
        out
    }

    pub fn scale(&self, c: C) -> TruncatedPoly {
        TruncatedPoly {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> TruncatedPoly {
        let mut out = Self::constant(&self.basis, C::new(1.0, 0.0));
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// `exp(self)` by its power series, summed until the terms are
    /// negligible.
    pub fn exp(&self) -> TruncatedPoly {
        let mut sum = Self::constant(&self.basis, C::new(1.0, 0.0));
        let mut term = sum.clone();
        for k in 1..=400u32 {
            term = term.mul(self).scale(C::new(1.0 / k as f64, 0.0));
            sum = sum.add(&term);
            if term.norm1() <= 1e-18 * sum.norm1().max(1e-300) && k as f64 > self.norm1() {
                break;
            }
        }
        sum
    }
}

/// Data of the operator `prefactor · U(A, b, c)`. `a` has one row per output
/// variable and one column per input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorData {
    pub a: ComplexMatrix,
    pub b: Vec<C>,
    pub c: Vec<C>,
    pub prefactor: C,
}

impl OperatorData {
    pub fn new(a: ComplexMatrix, b: Vec<C>, c: Vec<C>, prefactor: C) -> Result<Self> {
        let op = OperatorData { a, b, c, prefactor };
        op.check()?;
        Ok(op)
    }

    pub fn identity(n: usize) -> Self {
        let zero = C::new(0.0, 0.0);
        let a = (0..n)
            .map(|i| (0..n).map(|j| if i == j { C::new(1.0, 0.0) } else { zero }).collect())
            .collect();
        OperatorData {
            a,
            b: vec![zero; n],
            c: vec![zero; n],
            prefactor: C::new(1.0, 0.0),
        }
    }

    /// `f(z) ↦ f(Dz)` for a diagonal `D`.
    pub fn diagonal(d: &[C]) -> Self {
        let mut op = Self::identity(d.len());
        for (i, &x) in d.iter().enumerate() {
            op.a[i][i] = x;
        }
        op
    }

    /// Number of variables of the result polynomial.
    pub fn inputs(&self) -> usize {
        self.c.len()
    }

    /// Number of variables of the polynomial acted on.
    pub fn outputs(&self) -> usize {
        self.b.len()
    }

    fn check(&self) -> Result<()> {
        if self.a.len() != self.b.len() || self.a.iter().any(|r| r.len() != self.c.len()) {
            return structural(format!(
                "operator blocks of shapes {}x{:?}, b {}, c {}",
                self.a.len(),
                self.a.first().map(Vec::len),
                self.b.len(),
                self.c.len()
            ));
        }
        Ok(())
    }

    /// `U z^q` with every term above `degree` dropped.
    fn apply_monomial(&self, q: &[u32], basis: &Arc<Basis>) -> TruncatedPoly {
        let mut poly = TruncatedPoly::exp_linear(basis, &self.c).scale(self.prefactor);
        for (j, &qj) in q.iter().enumerate() {
            if qj > 0 {
                poly = poly.mul(&TruncatedPoly::affine(basis, &self.a[j], self.b[j]).pow(qj));
            }
        }
        poly
    }
}

fn degree(m: &[u32]) -> u32 {
    m.iter().sum()
}

/// `⟨p|U|q⟩ = [z^p] prefactor · (Az + b)^q · exp(c·z)`.
pub fn u_matrix_element(op: &OperatorData, p: &[u32], q: &[u32], degree_cap: u32) -> Result<C> {
    op.check()?;
    if p.len() != op.inputs() || q.len() != op.outputs() {
        return structural(format!(
            "multi-indices of lengths ({}, {}) for an operator on {}→{} variables",
            p.len(),
            q.len(),
            op.outputs(),
            op.inputs()
        ));
    }
    if degree(p) > degree_cap || degree(q) > degree_cap {
        return domain(format!("multi-index degree above cap {degree_cap}"));
    }
    let basis = Basis::new(op.inputs(), degree(p));
    Ok(op.apply_monomial(q, &basis).coeff(p))
}

/// All elements `⟨p|U|q⟩` with `|p|, |q| ≤ degree`, rows indexed by `p`.
pub fn u_matrix(op: &OperatorData, degree: u32) -> Result<IndexedMatrix> {
    op.check()?;
    let basis = Basis::new(op.inputs(), degree);
    let rows = multi_indices(op.inputs(), degree);
    let cols = multi_indices(op.outputs(), degree);
    let images: Vec<TruncatedPoly> = cols.iter().map(|q| op.apply_monomial(q, &basis)).collect();
    let m = rows
        .iter()
        .map(|p| images.iter().map(|img| img.coeff(p)).collect())
        .collect();
    Ok((rows, cols, m))
}

/// Closed-form product `U(op1) U(op2)`.
pub fn compose_operators(op1: &OperatorData, op2: &OperatorData) -> Result<OperatorData> {
    op1.check()?;
    op2.check()?;
    if op2.inputs() != op1.outputs() {
        return structural(format!(
            "cannot compose operators: {} outputs into {} inputs",
            op1.outputs(),
            op2.inputs()
        ));
    }
    let (k, m, n) = (op2.outputs(), op1.outputs(), op1.inputs());
    let zero = C::new(0.0, 0.0);
    // A'A
    let a = (0..k)
        .map(|r| {
            (0..n)
                .map(|col| (0..m).map(|j| op2.a[r][j] * op1.a[j][col]).fold(zero, |x, y| x + y))
                .collect()
        })
        .collect();
    // A'b + b'
    let b = (0..k)
        .map(|r| (0..m).map(|j| op2.a[r][j] * op1.b[j]).fold(op2.b[r], |x, y| x + y))
        .collect();
    // Aᵀc' + c
    let c = (0..n)
        .map(|col| (0..m).map(|j| op1.a[j][col] * op2.c[j]).fold(op1.c[col], |x, y| x + y))
        .collect();
    let bc: C = op1.b.iter().zip(&op2.c).map(|(x, y)| x * y).fold(zero, |x, y| x + y);
    Ok(OperatorData {
        a,
        b,
        c,
        prefactor: op1.prefactor * op2.prefactor * bc.exp(),
    })
}

/// `[z^p] U(op1) (U(op2) z^r)` by substituting `Az + b` into the power
/// series of `U(op2) z^r` and summing the exponential until it converges.
/// Independent of [`compose_operators`].
pub fn compose_element_by_expansion(op1: &OperatorData, op2: &OperatorData, p: &[u32], r: &[u32]) -> Result<C> {
    if p.len() != op1.inputs() || r.len() != op2.outputs() {
        return structural("multi-index shapes do not fit the operators");
    }
    let ex = Expansion::new(op1, op2, degree(p))?;
    Ok(ex.image(r).coeff(p))
}

/// All elements `⟨p|U(op1)U(op2)|r⟩` with `|p|, |r| ≤ degree`, computed as
/// in [`compose_element_by_expansion`]; rows indexed by `p`.
pub fn compose_matrix_by_expansion(op1: &OperatorData, op2: &OperatorData, degree: u32) -> Result<IndexedMatrix> {
    let ex = Expansion::new(op1, op2, degree)?;
    let rows = multi_indices(op1.inputs(), degree);
    let cols = multi_indices(op2.outputs(), degree);
    let images: Vec<TruncatedPoly> = cols.iter().map(|r| ex.image(r)).collect();
    let m = rows
        .iter()
        .map(|p| images.iter().map(|img| img.coeff(p)).collect())
        .collect();
    Ok((rows, cols, m))
}

/// `U(op1)` applied to `U(op2) z^r` by substitution.
struct Expansion<'a> {
    op2: &'a OperatorData,
    /// `y_j = (Az + b)_j` as series in `z`
    y: Vec<TruncatedPoly>,
    /// `prefactors · exp(c'·y) · exp(c·z)`
    common: TruncatedPoly,
}

impl<'a> Expansion<'a> {
    fn new(op1: &OperatorData, op2: &'a OperatorData, degree: u32) -> Result<Self> {
        op1.check()?;
        op2.check()?;
        if op2.inputs() != op1.outputs() {
            return structural("operator shapes do not fit");
        }
        let basis = Basis::new(op1.inputs(), degree);
        let y: Vec<TruncatedPoly> = (0..op1.outputs())
            .map(|j| TruncatedPoly::affine(&basis, &op1.a[j], op1.b[j]))
            .collect();
        let mut ex = Expansion {
            op2,
            y,
            common: TruncatedPoly::zero(&basis),
        };
        ex.common = ex
            .linear_in_y(&op2.c, C::new(0.0, 0.0))
            .exp()
            .mul(&TruncatedPoly::exp_linear(&basis, &op1.c))
            .scale(op2.prefactor * op1.prefactor);
        Ok(ex)
    }

    fn linear_in_y(&self, coefs: &[C], constant: C) -> TruncatedPoly {
        coefs
            .iter()
            .zip(&self.y)
            .fold(TruncatedPoly::constant(&self.y_basis(), constant), |acc, (&a, yj)| {
                acc.add(&yj.scale(a))
            })
    }

    fn y_basis(&self) -> Arc<Basis> {
        self.common.basis.clone()
    }

    fn image(&self, r: &[u32]) -> TruncatedPoly {
        let mut out = self.common.clone();
        for (k, &rk) in r.iter().enumerate() {
            if rk > 0 {
                out = out.mul(&self.linear_in_y(&self.op2.a[k], self.op2.b[k]).pow(rk));
            }
        }
        out
    }
}

/// Normalization applied to operator elements to obtain Mellin images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    None,
    /// Divide `⟨p|U|q⟩` by `q! = ∏ q_j!`.
    InverseTargetFactorial,
}

/// Operator whose normalized matrix elements are the Mellin images of ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shadow {
    pub op: OperatorData,
    pub s: C,
    pub normalizer: Normalizer,
}

impl Shadow {
    pub fn element(&self, phi: &Configuration, psi: &Configuration) -> Result<C> {
        let (p, q) = (phi.multiplicities(), psi.multiplicities());
        let raw = u_matrix_element(&self.op, p, q, degree(p).max(degree(q)))?;
        Ok(match self.normalizer {
            Normalizer::None => raw,
            Normalizer::InverseTargetFactorial => raw / q.iter().map(|&k| factorial(k) as f64).product::<f64>(),
        })
    }
}

fn check_strip(s: C) -> Result<()> {
    if !(0.0..=1.0).contains(&s.re) {
        return domain(format!("Mellin exponent {s} outside the strip 0 ≤ Re s ≤ 1"));
    }
    Ok(())
}

/// `A = M(P_fin,fin)ᵀ`, `b = M(P_∞,fin)`, `c = M(P_fin,∞)`, prefactor
/// `C · h^s · exp(M(p_∞∞) − mass(p_∞∞))`.
pub fn shadow_of_v(p: &VPolymorphism, s: C) -> Result<Shadow> {
    check_strip(s)?;
    let img = p.mellin_image(s);
    let (rows, cols) = (p.source().len(), p.target().len());
    let a = (0..cols)
        .map(|j| (0..rows).map(|i| img.fin_fin[i][j]).collect())
        .collect();
    let non_corner: f64 = p
        .fin_fin()
        .iter()
        .flatten()
        .chain(p.fin_inf())
        .chain(p.inf_fin())
        .map(AtomicMeasure::total_mass)
        .sum();
    let drift: f64 = p.blocks().map(AtomicMeasure::signed_dev_mass).sum();
    let log_pref = C::new(-non_corner, 0.0) + s * (-drift) + img.inf_inf - p.inf_inf().total_mass();
    Ok(Shadow {
        op: OperatorData {
            a,
            b: img.inf_fin,
            c: img.fin_inf,
            prefactor: log_pref.exp(),
        },
        s,
        normalizer: Normalizer::InverseTargetFactorial,
    })
}

/// Shadow of `ω(Q) ∘ ω(P)`: the middle Poisson weights turn into the
/// rescaling `z ↦ z/ν` between the two operators and a factor `exp(Σν)`.
pub fn compose_shadows(q: &Shadow, p: &Shadow, middle: &BorderedSpace) -> Result<Shadow> {
    if q.s != p.s || q.normalizer != p.normalizer {
        return structural("shadows at different exponents or normalizations");
    }
    if p.op.outputs() != middle.len() || q.op.inputs() != middle.len() {
        return structural("middle space does not fit the shadows");
    }
    let inv: Vec<C> = middle.masses().iter().map(|&nu| C::new(1.0 / nu, 0.0)).collect();
    let scaled = compose_operators(&p.op, &OperatorData::diagonal(&inv))?;
    let mut op = compose_operators(&scaled, &q.op)?;
    op.prefactor *= middle.masses().iter().sum::<f64>().exp();
    Ok(Shadow {
        op,
        s: p.s,
        normalizer: p.normalizer,
    })
}

/// True when `u` and `v` agree within `tol` at every exponent listed.
pub fn agree_on(u: &AtomicMeasure, v: &AtomicMeasure, exponents: &[C], tol: f64) -> bool {
    exponents.iter().all(|&s| (u.mellin(s) - v.mellin(s)).norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bordered::compose_v;
    use crate::poisson::omega_entry;
    use crate::policy::TruncationPolicy;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn m(pairs: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs(pairs).unwrap()
    }

    fn sample_op(seed: u64, n: usize) -> OperatorData {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut cv = || c(next(), next());
        let a = (0..n).map(|_| (0..n).map(|_| cv()).collect()).collect();
        let b = (0..n).map(|_| cv()).collect();
        let cc = (0..n).map(|_| cv()).collect();
        OperatorData::new(a, b, cc, c(1.0, 0.0) + cv()).unwrap()
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(3, 4).len(), 35);
        assert_eq!(multi_indices(1, 4).len(), 5);
        assert_eq!(multi_indices(0, 3), vec![Vec::<u32>::new()]);
        assert_eq!(multi_indices(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn identity_elements() {
        let id = OperatorData::identity(2);
        for p in multi_indices(2, 3) {
            for q in multi_indices(2, 3) {
                let e = u_matrix_element(&id, &p, &q, 3).unwrap();
                assert_eq!(e, if p == q { c(1.0, 0.0) } else { c(0.0, 0.0) });
            }
        }
    }

    #[test]
    fn scaling_elements() {
        let a = c(0.3, -1.2);
        let op = OperatorData::diagonal(&[a]);
        for p in 0..5u32 {
            for q in 0..5u32 {
                let e = u_matrix_element(&op, &[p], &[q], 4).unwrap();
                let want = if p == q { a.powu(q) } else { c(0.0, 0.0) };
                assert!((e - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn degree_cap_enforced() {
        let op = OperatorData::identity(1);
        assert!(u_matrix_element(&op, &[5], &[0], 4).is_err());
        assert!(u_matrix_element(&op, &[0, 0], &[0], 4).is_err());
    }

    #[test]
    fn one_variable_shift() {
        // f(z) = z², U f = (z + b)² e^{cz}; [z^1] = 2b + b²c
        let (b, cc) = (c(0.5, 0.1), c(-0.2, 0.3));
        let op = OperatorData::new(vec![vec![c(1.0, 0.0)]], vec![b], vec![cc], c(1.0, 0.0)).unwrap();
        let e = u_matrix_element(&op, &[1], &[2], 4).unwrap();
        assert!((e - (b * 2.0 + b * b * cc)).norm() < 1e-15);
    }

    #[test]
    fn composition_law_against_expansion() {
        for seed in 0..6 {
            for n in 1..=3 {
                let (o1, o2) = (sample_op(seed, n), sample_op(seed + 100, n));
                let closed = compose_operators(&o1, &o2).unwrap();
                for p in multi_indices(n, 3) {
                    for r in multi_indices(n, 2) {
                        let lhs = compose_element_by_expansion(&o1, &o2, &p, &r).unwrap();
                        let rhs = u_matrix_element(&closed, &p, &r, 4).unwrap();
                        assert!((lhs - rhs).norm() < 1e-12, "{p:?} {r:?}: {lhs} vs {rhs}");
                    }
                }
            }
        }
    }

    #[test]
    fn mellin_images_of_elementary_maps() {
        let u = m(&[(2.0, 0.3), (0.7, 1.1)]);
        let v = m(&[(1.5, 0.4)]);
        for &s in MellinGridPoints.iter() {
            let conv = u.convolve(&v).unwrap().mellin(s);
            assert!((conv - u.mellin(s) * v.mellin(s)).norm() < 1e-12);
            assert!((u.add(&v).mellin(s) - u.mellin(s) - v.mellin(s)).norm() < 1e-12);
            let d = AtomicMeasure::delta(3.0, 1.0).unwrap().mellin(s);
            assert!((d - C::new(3.0, 0.0).powc(s)).norm() < 1e-12);
            let policy = TruncationPolicy::default();
            let e = u.normed_exp(&policy).unwrap().mellin(s);
            assert!((e - (u.mellin(s) - u.total_mass()).exp()).norm() < 1e-11);
        }
    }

    #[allow(non_upper_case_globals)]
    const MellinGridPoints: [C; 4] = [C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.5, 2.0), C::new(0.2, -1.0)];

    fn one_point(seed: f64) -> VPolymorphism {
        let ff = m(&[(2.0, 0.3 * seed), (0.5, 0.2)]);
        let fi = m(&[(1.5, 0.5 - 0.3 * seed)]);
        let inf = m(&[(0.75, 0.4)]);
        let src = BorderedSpace::new(vec![0.7]).unwrap();
        let nu = BorderedSpace::new(vec![ff.first_moment() + inf.first_moment()]).unwrap();
        VPolymorphism::new(src, nu, vec![vec![ff]], vec![fi], vec![inf], m(&[(3.0, 0.2)])).unwrap()
    }

    #[test]
    fn shadow_matches_labeled_omega() {
        let p = one_point(1.0);
        let policy = TruncationPolicy::new(5, 1e-3, 1e-14).unwrap();
        for &s in MellinGridPoints.iter() {
            let sh = shadow_of_v(&p, s).unwrap();
            for a in 0..=3u32 {
                for b in 0..=3u32 {
                    let (phi, psi) = (Configuration(vec![a]), Configuration(vec![b]));
                    let want = omega_entry(&p, &phi, &psi, &policy).unwrap().mellin(s);
                    let got = sh.element(&phi, &psi).unwrap();
                    assert!((got - want).norm() < 1e-12, "s={s} ({a},{b}): {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn shadow_trivial_cases() {
        let p = one_point(1.0);
        assert!(shadow_of_v(&p, c(1.5, 0.0)).is_err());
        assert!(shadow_of_v(&p, c(-0.1, 0.0)).is_err());

        let pure = VPolymorphism::pure_border(m(&[(2.0, 0.5)]));
        let sh = shadow_of_v(&pure, c(1.0, 0.0)).unwrap();
        assert!(sh.op.a.is_empty() && sh.op.b.is_empty() && sh.op.c.is_empty());
        // C = 1, h = e^{−1/2}, exp(1 − 1/2)
        assert!((sh.op.prefactor - c(1.0, 0.0)).norm() < 1e-15);

        let zero_border = VPolymorphism::from_rstar(&crate::rstar::RStarPolymorphism::identity(
            &crate::rstar::FiniteSpace::new(vec![0.4, 0.6]).unwrap(),
        ));
        let sh = shadow_of_v(&zero_border, c(0.0, 0.0)).unwrap();
        assert_eq!(
            sh.op.a,
            vec![vec![c(0.4, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.6, 0.0)]]
        );
        assert!(sh.op.b.iter().chain(&sh.op.c).all(|x| x.norm() == 0.0));
    }

    #[test]
    fn shadow_commutes_with_composition() {
        let p = one_point(1.0);
        let nu = p.target().masses()[0];
        let (q11, q1i) = (m(&[(1.2, 0.4 * nu)]), m(&[(0.8, 0.6 * nu)]));
        let qi1 = m(&[(0.9, 0.3)]);
        let kappa = BorderedSpace::new(vec![q11.first_moment() + qi1.first_moment()]).unwrap();
        let q = VPolymorphism::new(
            p.target().clone(),
            kappa,
            vec![vec![q11]],
            vec![q1i],
            vec![qi1],
            m(&[(0.5, 0.1)]),
        )
        .unwrap();
        let qp = compose_v(&q, &p).unwrap();
        for &s in MellinGridPoints.iter() {
            let lhs = compose_shadows(&shadow_of_v(&q, s).unwrap(), &shadow_of_v(&p, s).unwrap(), p.target()).unwrap();
            let rhs = shadow_of_v(&qp, s).unwrap();
            for a in 0..=3u32 {
                for b in 0..=3u32 {
                    let (phi, psi) = (Configuration(vec![a]), Configuration(vec![b]));
                    let x = lhs.element(&phi, &psi).unwrap();
                    let y = rhs.element(&phi, &psi).unwrap();
                    assert!((x - y).norm() < 1e-12 * (1.0 + y.norm()), "s={s} ({a},{b}) {x} {y}");
                }
            }
        }
    }

    #[test]
    fn agreement_helper() {
        let u = m(&[(2.0, 1.0)]);
        let v = m(&[(2.0, 1.0 + 1e-14)]);
        let w = m(&[(0.5, 1.0)]);
        let grid = [c(0.0, 0.0), c(1.0, 0.0)];
        assert!(agree_on(&u, &v, &grid, 1e-12));
        assert!(!agree_on(&u, &w, &grid, 1e-12));
    }
}
