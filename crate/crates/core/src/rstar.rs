//! ℝ*-polymorphisms of finite spaces.
//!
//! A polymorphism `P: A → B` is a matrix of measures `p_ij` on ℝ* (rows are
//! source points, columns target points) with
//!
//! * row law: `Σ_j mass(p_ij) = α_i`,
//! * column law: `Σ_i ∫x dp_ij = β_j`.
//!
//! Composition of `P: A → B` with `Q: B → C` is
//! `r_ik = Σ_j β_j⁻¹ · p_ij * q_jk`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Error, Result};
use crate::measure::AtomicMeasure;

/// Default absolute tolerance for the marginal laws.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-9;
/// Relative tolerance when matching the masses of two spaces.
pub const SPACE_MATCH_TOL: f64 = 1e-9;

pub type ComplexMatrix = Vec<Vec<Complex64>>;

/// A finite measure space: one positive mass per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteSpace {
    masses: Vec<f64>,
}

impl FiniteSpace {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return domain(format!("point masses must be positive and finite, got {m}"));
        }
        Ok(FiniteSpace { masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }

    pub fn matches(&self, other: &FiniteSpace) -> bool {
        masses_match(&self.masses, &other.masses)
    }

    /// Group sums of the masses.
    pub fn quotient(&self, partition: &Partition) -> Result<FiniteSpace> {
        partition.check_len(self.len())?;
        let mut q = vec![0.0; partition.num_groups()];
        for (i, &g) in partition.labels().iter().enumerate() {
            q[g] += self.masses[i];
        }
        FiniteSpace::new(q)
    }
}

impl TryFrom<Vec<f64>> for FiniteSpace {
    type Error = Error;
    fn try_from(masses: Vec<f64>) -> Result<Self> {
        FiniteSpace::new(masses)
    }
}

impl From<FiniteSpace> for Vec<f64> {
    fn from(s: FiniteSpace) -> Self {
        s.masses
    }
}

pub(crate) fn masses_match(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= SPACE_MATCH_TOL * x.abs().max(y.abs()).max(1.0))
}

/// Assignment of each point to a group label `0..k`; every group nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    labels: Vec<usize>,
    groups: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let groups = labels.iter().map(|&g| g + 1).max().unwrap_or(0);
        let mut seen = vec![false; groups];
        for &g in &labels {
            seen[g] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return structural(format!("partition group {empty} is empty"));
        }
        Ok(Partition { labels, groups })
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            groups: n,
        }
    }

    pub fn all_in_one(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            groups: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_groups(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return structural(format!(
                "partition covers {} points, space has {}",
                self.labels.len(),
                n
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Partition::new(labels)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.labels
    }
}

/// Residuals of the marginal laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_residual: f64,
    pub column_residual: f64,
    pub tolerance: f64,
    pub accepted: bool,
}

impl ValidationReport {
    pub(crate) fn new(row_residual: f64, column_residual: f64, tolerance: f64) -> Self {
        ValidationReport {
            row_residual,
            column_residual,
            tolerance,
            accepted: row_residual <= tolerance && column_residual <= tolerance,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.row_residual.max(self.column_residual)
    }
}

/// Instance-file layout: `{"source": [...], "target": [...], "entries": [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RStarRaw")]
pub struct RStarPolymorphism {
    source: FiniteSpace,
    target: FiniteSpace,
    entries: Vec<Vec<AtomicMeasure>>,
}

#[derive(Deserialize)]
struct RStarRaw {
    source: FiniteSpace,
    target: FiniteSpace,
    entries: Vec<Vec<AtomicMeasure>>,
}

impl TryFrom<RStarRaw> for RStarPolymorphism {
    type Error = Error;
    fn try_from(raw: RStarRaw) -> Result<Self> {
        RStarPolymorphism::new(raw.source, raw.target, raw.entries)
    }
}

impl RStarPolymorphism {
    /// Checks shapes only; use [`RStarPolymorphism::validate`] for the
    /// marginal laws.
    pub fn new(source: FiniteSpace, target: FiniteSpace, entries: Vec<Vec<AtomicMeasure>>) -> Result<Self> {
        if entries.len() != source.len() {
            return structural(format!(
                "{} rows for a source of {} points",
                entries.len(),
                source.len()
            ));
        }
        if let Some(row) = entries.iter().find(|r| r.len() != target.len()) {
            return structural(format!(
                "row of length {} for a target of {} points",
                row.len(),
                target.len()
            ));
        }
        Ok(RStarPolymorphism {
            source,
            target,
            entries,
        })
    }

    /// `p_ii = δ₁(α_i)`.
    pub fn identity(space: &FiniteSpace) -> Self {
        let n = space.len();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            AtomicMeasure::delta(1.0, space.masses()[i]).expect("positive mass")
                        } else {
                            AtomicMeasure::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        RStarPolymorphism {
            source: space.clone(),
            target: space.clone(),
            entries,
        }
    }

    /// The total uniform spreading `p_ij = δ₁(α_i β_j / T)`, where `T` is
    /// the common total mass of both spaces.
    pub fn uniform_spreading(source: &FiniteSpace, target: &FiniteSpace) -> Result<Self> {
        let (ta, tb) = (source.total(), target.total());
        if (ta - tb).abs() > SPACE_MATCH_TOL * ta.max(tb).max(1.0) {
            return structural(format!("total masses differ: {ta} vs {tb}"));
        }
        let entries = source
            .masses()
            .iter()
            .map(|a| {
                target
                    .masses()
                    .iter()
                    .map(|b| AtomicMeasure::delta(1.0, a * b / ta).expect("positive mass"))
                    .collect()
            })
            .collect();
        Ok(RStarPolymorphism {
            source: source.clone(),
            target: target.clone(),
            entries,
        })
    }

    pub fn source(&self) -> &FiniteSpace {
        &self.source
    }

    pub fn target(&self) -> &FiniteSpace {
        &self.target
    }

    pub fn entries(&self) -> &[Vec<AtomicMeasure>] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> &AtomicMeasure {
        &self.entries[i][j]
    }

    pub fn into_entries(self) -> Vec<Vec<AtomicMeasure>> {
        self.entries
    }

    pub fn row_masses(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().map(AtomicMeasure::total_mass).sum())
            .collect()
    }

    pub fn column_moments(&self) -> Vec<f64> {
        (0..self.target.len())
            .map(|j| self.entries.iter().map(|row| row[j].first_moment()).sum())
            .collect()
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        let row = max_abs_diff(&self.row_masses(), self.source.masses());
        let col = max_abs_diff(&self.column_moments(), self.target.masses());
        ValidationReport::new(row, col, tol)
    }

    /// `P` followed by `next`.
    pub fn then(&self, next: &RStarPolymorphism) -> Result<RStarPolymorphism> {
        compose(next, self)
    }

    /// Entrywise `x ↦ x^a`. The result generally violates the column law.
    pub fn rescale_entries(&self, a: f64) -> Result<RStarPolymorphism> {
        let entries = self
            .entries
            .iter()
            .map(|row| row.iter().map(|m| m.rescale_exponent(a)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(RStarPolymorphism {
            source: self.source.clone(),
            target: self.target.clone(),
            entries,
        })
    }

    /// Maximum entrywise Mellin-grid distance to another polymorphism of
    /// the same shape.
    pub fn distance(&self, other: &RStarPolymorphism) -> Result<f64> {
        if self.entries.len() != other.entries.len() || self.target.len() != other.target.len() {
            return structural("shapes differ");
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(r, s)| r.iter().zip(s).map(|(u, v)| u.distance(v)))
            .fold(0.0, f64::max))
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `Q ∘ P`: first `p: A → B`, then `q: B → C`.
pub fn compose(q: &RStarPolymorphism, p: &RStarPolymorphism) -> Result<RStarPolymorphism> {
    if !p.target.matches(&q.source) {
        return structural("target of the first polymorphism differs from source of the second");
    }
    compose_unchecked(q, p, p.target.masses())
}

fn compose_unchecked(q: &RStarPolymorphism, p: &RStarPolymorphism, middle: &[f64]) -> Result<RStarPolymorphism> {
    let (rows, cols) = (p.source.len(), q.target.len());
    let flat = (0..rows * cols)
        .into_par_iter()
        .map(|idx| weighted_entry(&p.entries[idx / cols], q, idx % cols, middle))
        .collect::<Result<Vec<_>>>()?;
    let mut it = flat.into_iter();
    let entries = (0..rows).map(|_| it.by_ref().take(cols).collect()).collect();
    Ok(RStarPolymorphism {
        source: p.source.clone(),
        target: q.target.clone(),
        entries,
    })
}

fn weighted_entry(p_row: &[AtomicMeasure], q: &RStarPolymorphism, k: usize, middle: &[f64]) -> Result<AtomicMeasure> {
    let terms = p_row
        .iter()
        .zip(middle)
        .enumerate()
        .filter(|(j, (pij, _))| !pij.is_zero() && !q.entries[*j][k].is_zero())
        .map(|(j, (pij, beta))| Ok((1.0, pij.convolve_over(&q.entries[j][k], *beta)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AtomicMeasure::weighted_sum(terms))
}

/// A single entry `(i, k)` of `Q ∘ P`, without building the whole product.
pub fn compose_entry(q: &RStarPolymorphism, p: &RStarPolymorphism, i: usize, k: usize) -> Result<AtomicMeasure> {
    if !p.target.matches(&q.source) {
        return structural("target of the first polymorphism differs from source of the second");
    }
    if i >= p.source.len() || k >= q.target.len() {
        return structural(format!("entry ({i}, {k}) out of range"));
    }
    weighted_entry(&p.entries[i], q, k, p.target.masses())
}

/// Entry `(I, J)` is the sum of `p_ij` over `i ∈ I`, `j ∈ J`.
pub fn coarsen(p: &RStarPolymorphism, source_part: &Partition, target_part: &Partition) -> Result<RStarPolymorphism> {
    let source = p.source.quotient(source_part)?;
    let target = p.target.quotient(target_part)?;
    let entries = coarsen_matrix(&p.entries, source_part, target_part);
    Ok(RStarPolymorphism {
        source,
        target,
        entries,
    })
}

pub(crate) fn coarsen_matrix(
    entries: &[Vec<AtomicMeasure>],
    rows: &Partition,
    cols: &Partition,
) -> Vec<Vec<AtomicMeasure>> {
    let mut buckets: Vec<Vec<Vec<&AtomicMeasure>>> = vec![vec![Vec::new(); cols.num_groups()]; rows.num_groups()];
    for (i, row) in entries.iter().enumerate() {
        for (j, m) in row.iter().enumerate() {
            buckets[rows.group(i)][cols.group(j)].push(m);
        }
    }
    buckets
        .into_iter()
        .map(|row| row.into_iter().map(AtomicMeasure::sum).collect())
        .collect()
}

/// Spreads a polymorphism of quotient spaces back over the fine spaces:
/// `p_ij = (α_i / α_I)(β_j / β_J) · r_IJ`.
pub fn lift(
    r: &RStarPolymorphism,
    source: &FiniteSpace,
    source_part: &Partition,
    target: &FiniteSpace,
    target_part: &Partition,
) -> Result<RStarPolymorphism> {
    let sq = source.quotient(source_part)?;
    let tq = target.quotient(target_part)?;
    if !sq.matches(&r.source) || !tq.matches(&r.target) {
        return structural("polymorphism is not defined on the quotient spaces of the partitions");
    }
    let entries = (0..source.len())
        .map(|i| {
            let gi = source_part.group(i);
            let a = source.masses()[i] / sq.masses()[gi];
            (0..target.len())
                .map(|j| {
                    let gj = target_part.group(j);
                    let b = target.masses()[j] / tq.masses()[gj];
                    r.entries[gi][gj].scale_unchecked(a * b)
                })
                .collect()
        })
        .collect();
    Ok(RStarPolymorphism {
        source: source.clone(),
        target: target.clone(),
        entries,
    })
}

/// `M[i][j] = ∫ x^w dp_ij` for `0 ≤ Re w ≤ 1`.
pub fn t_operator(p: &RStarPolymorphism, w: Complex64) -> Result<ComplexMatrix> {
    if !(0.0..=1.0).contains(&w.re) {
        return domain(format!("Re w = {} outside [0, 1]", w.re));
    }
    Ok(mellin_matrix(&p.entries, w))
}

pub(crate) fn mellin_matrix(entries: &[Vec<AtomicMeasure>], s: Complex64) -> ComplexMatrix {
    entries
        .iter()
        .map(|row| row.iter().map(|m| m.mellin(s)).collect())
        .collect()
}

/// `A · diag(weights)⁻¹ · B`.
pub fn weighted_matmul(a: &ComplexMatrix, weights: &[f64], b: &ComplexMatrix) -> ComplexMatrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|k| {
                    row.iter()
                        .zip(weights)
                        .zip(b)
                        .map(|((x, w), brow)| x * brow[k] / w)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `P` with every entry rescaled by `x ↦ x^a`, composed with itself `n` times.
/// The middle weights are the target masses of `P`; the column law is not
/// expected to survive rescaling.
pub fn power_rescaled(p: &RStarPolymorphism, n: u32, a: f64) -> Result<RStarPolymorphism> {
    if p.source.len() != p.target.len() {
        return structural("power of a non-square polymorphism");
    }
    if n == 0 {
        return domain("power must be positive");
    }
    let base = p.rescale_entries(a)?;
    let weights = p.target.masses().to_vec();
    let mut acc = base.clone();
    for _ in 1..n {
        acc = compose_unchecked(&base, &acc, &weights)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs(pairs).unwrap()
    }

    fn half() -> FiniteSpace {
        FiniteSpace::new(vec![0.5, 0.5]).unwrap()
    }

    fn two_by_two() -> RStarPolymorphism {
        let a = m(&[(2.0, 1.0 / 8.0)]);
        let b = m(&[(2.0 / 3.0, 3.0 / 8.0)]);
        RStarPolymorphism::new(half(), half(), vec![vec![a.clone(), b.clone()], vec![b, a]]).unwrap()
    }

    #[test]
    fn identity_and_uniform_are_valid() {
        let s = FiniteSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let id = RStarPolymorphism::identity(&s);
        assert_eq!(id.validate(0.0).max_residual(), 0.0);
        let t = FiniteSpace::new(vec![0.6, 0.4]).unwrap();
        let u = RStarPolymorphism::uniform_spreading(&s, &t).unwrap();
        assert!(u.validate(1e-15).accepted);
        assert!(RStarPolymorphism::uniform_spreading(&s, &FiniteSpace::new(vec![2.0]).unwrap()).is_err());
    }

    #[test]
    fn worked_example_is_valid() {
        let p = two_by_two();
        let rep = p.validate(DEFAULT_MARGINAL_TOL);
        assert!(rep.accepted, "{rep:?}");
        assert!(rep.max_residual() < 1e-16);
    }

    #[test]
    fn shape_errors() {
        let err = RStarPolymorphism::new(half(), half(), vec![vec![AtomicMeasure::zero(); 2]]);
        assert!(matches!(err, Err(Error::Structural(_))));
        let err = RStarPolymorphism::new(half(), half(), vec![vec![AtomicMeasure::zero(); 1]; 2]);
        assert!(matches!(err, Err(Error::Structural(_))));
        assert!(FiniteSpace::new(vec![0.0]).is_err());
        assert!(Partition::new(vec![0, 2]).is_err());
    }

    #[test]
    fn square_of_worked_example() {
        let p = two_by_two();
        let r = compose(&p, &p).unwrap();
        // r11 = 2·(1/64 δ₄ + 9/64 δ_{4/9}), r12 = 2·(2·3/64) δ_{4/3}
        let r11 = m(&[(4.0, 1.0 / 32.0), (4.0 / 9.0, 9.0 / 32.0)]);
        let r12 = m(&[(4.0 / 3.0, 3.0 / 16.0)]);
        assert!(r.entry(0, 0).atoms_close(&r11, 1e-15, 1e-16));
        assert!(r.entry(0, 1).atoms_close(&r12, 1e-15, 1e-16));
        assert!(r.entry(1, 1).atoms_close(&r11, 1e-15, 1e-16));
        assert!(r.entry(1, 0).atoms_close(&r12, 1e-15, 1e-16));
        assert!(r.validate(1e-12).accepted);
    }

    #[test]
    fn identity_is_neutral() {
        let p = two_by_two();
        let id = RStarPolymorphism::identity(&half());
        assert!(compose(&id, &p).unwrap().distance(&p).unwrap() < 1e-15);
        assert!(compose(&p, &id).unwrap().distance(&p).unwrap() < 1e-15);
    }

    #[test]
    fn identity_composition_is_exact() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = crate::random::space(&mut rng, 3, 0.05, 1.0, false);
            let p = crate::random::rstar(&mut rng, &crate::random::GenParams::default(), &s, 2);
            assert_eq!(compose(&RStarPolymorphism::identity(p.target()), &p).unwrap(), p);
            assert_eq!(compose(&p, &RStarPolymorphism::identity(&s)).unwrap(), p);
        }
    }

    #[test]
    fn single_point_compose_is_convolution() {
        let one = FiniteSpace::new(vec![1.0]).unwrap();
        let u = m(&[(2.0, 0.5), (0.5, 0.5)]);
        let v = m(&[(3.0, 0.25), (1.0 / 3.0, 0.75)]);
        let beta = u.first_moment();
        let target_u = FiniteSpace::new(vec![beta]).unwrap();
        let p = RStarPolymorphism::new(one.clone(), target_u.clone(), vec![vec![u.clone()]]).unwrap();
        let vb = v.scale(beta).unwrap();
        let q = RStarPolymorphism::new(
            target_u,
            FiniteSpace::new(vec![vb.first_moment()]).unwrap(),
            vec![vec![vb]],
        )
        .unwrap();
        let r = compose(&q, &p).unwrap();
        assert!(r.entry(0, 0).distance(&u.convolve(&v).unwrap()) < 1e-15);
    }

    #[test]
    fn compose_rejects_mismatched_spaces() {
        let p = two_by_two();
        let q = RStarPolymorphism::identity(&FiniteSpace::new(vec![0.3, 0.7]).unwrap());
        assert!(matches!(compose(&q, &p), Err(Error::Structural(_))));
    }

    #[test]
    fn coarsen_trivial_and_total() {
        let p = two_by_two();
        let same = coarsen(&p, &Partition::singletons(2), &Partition::singletons(2)).unwrap();
        assert_eq!(same, p);
        let all = coarsen(&p, &Partition::all_in_one(2), &Partition::all_in_one(2)).unwrap();
        assert_eq!(all.source().masses(), &[1.0]);
        let total = AtomicMeasure::sum(p.entries().iter().flatten());
        assert_eq!(all.entry(0, 0), &total);
        assert!(all.validate(1e-15).accepted);
    }

    #[test]
    fn lift_unit_gives_uniform_spreading() {
        let a = FiniteSpace::new(vec![0.2, 0.8]).unwrap();
        let b = FiniteSpace::new(vec![0.1, 0.6, 0.3]).unwrap();
        let one = FiniteSpace::new(vec![1.0]).unwrap();
        let r = RStarPolymorphism::identity(&one);
        let l = lift(&r, &a, &Partition::all_in_one(2), &b, &Partition::all_in_one(3)).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let want = a.masses()[i] * b.masses()[j];
                assert_eq!(l.entry(i, j).atoms().len(), 1);
                assert_eq!(l.entry(i, j).atoms()[0].position, 1.0);
                assert!((l.entry(i, j).total_mass() - want).abs() < 1e-16);
            }
        }
        let back = coarsen(&l, &Partition::all_in_one(2), &Partition::all_in_one(3)).unwrap();
        assert!(back.distance(&r).unwrap() < 1e-15);
    }

    #[test]
    fn lift_singletons_is_identity() {
        let p = two_by_two();
        let l = lift(
            &p,
            p.source(),
            &Partition::singletons(2),
            p.target(),
            &Partition::singletons(2),
        )
        .unwrap();
        assert_eq!(l, p);
    }

    #[test]
    fn t_operator_examples() {
        let s = FiniteSpace::new(vec![0.25, 0.75]).unwrap();
        let id = RStarPolymorphism::identity(&s);
        let t = t_operator(&id, Complex64::new(0.5, 0.3)).unwrap();
        assert_eq!(t[0][0], Complex64::new(0.25, 0.0));
        assert_eq!(t[1][0], Complex64::new(0.0, 0.0));
        let p = two_by_two();
        let t0 = t_operator(&p, Complex64::new(0.0, 0.0)).unwrap();
        for (row, a) in t0.iter().zip(p.source().masses()) {
            let sum: Complex64 = row.iter().sum();
            assert!((sum.re - a).abs() < 1e-16);
        }
        assert!(t_operator(&p, Complex64::new(1.5, 0.0)).is_err());
        assert!(t_operator(&p, Complex64::new(-0.1, 0.0)).is_err());
    }

    #[test]
    fn t_operator_multiplicative_on_worked_example() {
        let p = two_by_two();
        let w = Complex64::new(0.4, -0.9);
        let lhs = t_operator(&compose(&p, &p).unwrap(), w).unwrap();
        let rhs = weighted_matmul(
            &t_operator(&p, w).unwrap(),
            p.target().masses(),
            &t_operator(&p, w).unwrap(),
        );
        for (a, b) in lhs.iter().flatten().zip(rhs.iter().flatten()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn power_rescaled_examples() {
        let p = two_by_two();
        assert!(power_rescaled(&p, 1, 1.0).unwrap().distance(&p).unwrap() < 1e-15);
        let one = FiniteSpace::new(vec![1.0]).unwrap();
        let e = std::f64::consts::E;
        let pe = RStarPolymorphism::new(one.clone(), one, vec![vec![m(&[(e, 1.0)])]]).unwrap();
        let cube = power_rescaled(&pe, 3, 1.0).unwrap();
        assert!(cube.entry(0, 0).atoms_close(&m(&[(e * e * e, 1.0)]), 1e-15, 0.0));
        assert!(power_rescaled(&p, 2, 0.0).is_err());
    }

    #[test]
    fn classical_degeneration() {
        // entries at x = 1: composition is the weighted product of mass matrices
        let a = FiniteSpace::new(vec![0.4, 0.6]).unwrap();
        let b = FiniteSpace::new(vec![0.7, 0.3]).unwrap();
        let pm = [[0.3, 0.1], [0.4, 0.2]];
        let qm = [[0.5, 0.2], [0.1, 0.2]];
        let ent = |mm: &[[f64; 2]; 2]| {
            mm.iter()
                .map(|r| r.iter().map(|&w| AtomicMeasure::delta(1.0, w).unwrap()).collect())
                .collect()
        };
        let p = RStarPolymorphism::new(a.clone(), b.clone(), ent(&pm)).unwrap();
        let q = RStarPolymorphism::new(b.clone(), FiniteSpace::new(vec![0.6, 0.4]).unwrap(), ent(&qm)).unwrap();
        assert!(p.validate(1e-15).accepted && q.validate(1e-15).accepted);
        let r = compose(&q, &p).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let want: f64 = (0..2).map(|j| pm[i][j] * qm[j][k] / b.masses()[j]).sum();
                let e = r.entry(i, k);
                assert!(e.atoms().iter().all(|at| at.position == 1.0));
                assert!((e.total_mass() - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rescaling_commutes_with_composition() {
        let p = two_by_two();
        let a = 0.37;
        let lhs = compose(&p, &p).unwrap().rescale_entries(a).unwrap();
        let pr = p.rescale_entries(a).unwrap();
        let rhs = power_rescaled(&p, 2, a).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-14);
        assert!(
            compose_unchecked(&pr, &pr, p.target().masses())
                .unwrap()
                .distance(&lhs)
                .unwrap()
                < 1e-14
        );
    }

    #[test]
    fn partition_serde() {
        let p: Partition = serde_json::from_str("[0, 1, 0]").unwrap();
        assert_eq!(p.num_groups(), 2);
        assert!(serde_json::from_str::<Partition>("[0, 2]").is_err());
    }
}
