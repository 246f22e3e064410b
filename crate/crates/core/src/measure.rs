//! Finite atomic measures on the multiplicative group of positive reals.
//!
//! An [`AtomicMeasure`] is a sorted list of `(position, mass)` atoms. Under
//! [`AtomicMeasure::add`] and [`AtomicMeasure::convolve`] these form a
//! commutative semiring with unit `δ₁`. Each Mellin evaluation
//! `u ↦ Σ w·x^s` is a semiring homomorphism into the complex numbers, and a
//! finite grid of such evaluations gives the distance used throughout the
//! crate to compare measures.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::policy::{poisson_upper_tail, TruncationPolicy};

/// Default merge tolerance in log-position.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Default atom cap per measure.
pub const DEFAULT_ATOM_CAP: usize = 100_000;
/// Raw atom pairs materialized by a single convolution before merging.
const RAW_PAIR_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

impl Atom {
    pub fn new(position: f64, mass: f64) -> Self {
        Atom { position, mass }
    }
}

/// What to do when a convolution exceeds the atom cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overflow {
    #[default]
    Error,
    /// Keep the heaviest atoms and report the dropped mass.
    Prune,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSettings {
    pub merge_tol: f64,
    pub atom_cap: usize,
    pub overflow: Overflow,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        MeasureSettings {
            merge_tol: DEFAULT_MERGE_TOL,
            atom_cap: DEFAULT_ATOM_CAP,
            overflow: Overflow::Error,
        }
    }
}

/// Result of a convolution under [`Overflow::Prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub measure: AtomicMeasure,
    pub dropped_mass: f64,
}

/// A finite positive measure on ℝ* with finitely many atoms, kept in
/// canonical form: positions strictly increasing, no two atoms within the
/// merge tolerance, no zero masses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// The zero measure.
    pub fn zero() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    /// The convolution unit `δ₁` with mass one.
    pub fn unit() -> Self {
        Self::delta_unchecked(1.0, 1.0)
    }

    /// `mass · δ_h`.
    pub fn delta(h: f64, mass: f64) -> Result<Self> {
        check_atom(h, mass)?;
        Ok(Self::delta_unchecked(h, mass))
    }

    fn delta_unchecked(h: f64, mass: f64) -> Self {
        if mass == 0.0 {
            Self::zero()
        } else {
            AtomicMeasure {
                atoms: vec![Atom::new(h, mass)],
            }
        }
    }

    /// Builds a canonical measure from raw `(position, mass)` pairs with the
    /// default merge tolerance.
    pub fn from_pairs(raw: &[(f64, f64)]) -> Result<Self> {
        Self::canonicalize(raw.iter().map(|&(x, w)| Atom::new(x, w)), DEFAULT_MERGE_TOL)
    }

    /// Sorts, drops zero masses, and merges atoms whose positions are within
    /// `merge_tol` of each other in log-space. A merged atom sits at the
    /// mass-weighted geometric mean of its members.
    pub fn canonicalize(raw: impl IntoIterator<Item = Atom>, merge_tol: f64) -> Result<Self> {
        if !(merge_tol >= 0.0) {
            return domain(format!("merge tolerance must be nonnegative, got {merge_tol}"));
        }
        let mut atoms = Vec::new();
        for a in raw {
            check_atom(a.position, a.mass)?;
            if a.mass > 0.0 {
                atoms.push(a);
            }
        }
        Ok(Self::canonicalize_valid(atoms, merge_tol))
    }

    fn canonicalize_valid(mut atoms: Vec<Atom>, merge_tol: f64) -> Self {
        atoms.retain(|a| a.mass > 0.0);
        atoms.sort_unstable_by(|a, b| a.position.total_cmp(&b.position));
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        let mut cluster = Cluster::default();
        for a in atoms {
            if cluster.is_empty() || (a.position.ln() - cluster.anchor_log).abs() > merge_tol {
                if let Some(done) = cluster.finish() {
                    out.push(done);
                }
                cluster = Cluster::start(a);
            } else {
                cluster.push(a);
            }
        }
        if let Some(done) = cluster.finish() {
            out.push(done);
        }
        AtomicMeasure { atoms: out }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a.position, a.mass)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.position * a.mass).sum()
    }

    /// `∫|x − 1| du`.
    pub fn abs_dev_mass(&self) -> f64 {
        self.atoms.iter().map(|a| (a.position - 1.0).abs() * a.mass).sum()
    }

    /// `∫(x − 1) du`.
    pub fn signed_dev_mass(&self) -> f64 {
        self.atoms.iter().map(|a| (a.position - 1.0) * a.mass).sum()
    }

    pub fn add(&self, other: &AtomicMeasure) -> AtomicMeasure {
        AtomicMeasure::sum([self, other])
    }

    /// Sum of many measures with a single canonicalization pass.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a AtomicMeasure>) -> AtomicMeasure {
        let mut atoms = Vec::new();
        for m in items {
            atoms.extend_from_slice(&m.atoms);
        }
        Self::canonicalize_valid(atoms, DEFAULT_MERGE_TOL)
    }

    /// Sum of owned measures each multiplied by a nonnegative coefficient.
    pub fn weighted_sum(items: impl IntoIterator<Item = (f64, AtomicMeasure)>) -> AtomicMeasure {
        let mut atoms = Vec::new();
        for (c, m) in items {
            atoms.extend(m.atoms.into_iter().map(|a| Atom::new(a.position, a.mass * c)));
        }
        Self::canonicalize_valid(atoms, DEFAULT_MERGE_TOL)
    }

    pub fn scale(&self, c: f64) -> Result<AtomicMeasure> {
        if !(c >= 0.0) || !c.is_finite() {
            return domain(format!("scale factor must be nonnegative and finite, got {c}"));
        }
        Ok(self.scale_unchecked(c))
    }

    pub(crate) fn scale_unchecked(&self, c: f64) -> AtomicMeasure {
        if c == 0.0 {
            return AtomicMeasure::zero();
        }
        AtomicMeasure {
            atoms: self.atoms.iter().map(|a| Atom::new(a.position, a.mass * c)).collect(),
        }
    }

    /// Convolution on the multiplicative group with default settings.
    pub fn convolve(&self, other: &AtomicMeasure) -> Result<AtomicMeasure> {
        Ok(self.convolve_with(other, &MeasureSettings::default())?.measure)
    }

    pub fn convolve_with(&self, other: &AtomicMeasure, settings: &MeasureSettings) -> Result<Pruned> {
        let raw = self.atoms.len() * other.atoms.len();
        if raw > RAW_PAIR_LIMIT {
            return Err(Error::AtomOverflow {
                count: raw,
                cap: settings.atom_cap,
            });
        }
        // δ₁-shifted factors are common (units, point masses); skip the sort.
        if other.atoms.len() == 1 {
            return Ok(self.shift_single(other.atoms[0], settings));
        }
        if self.atoms.len() == 1 {
            return Ok(other.shift_single(self.atoms[0], settings));
        }
        let mut atoms = Vec::with_capacity(raw);
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push(Atom::new(a.position * b.position, a.mass * b.mass));
            }
        }
        let measure = Self::canonicalize_valid(atoms, settings.merge_tol);
        measure.enforce_cap(settings)
    }

    /// `ν⁻¹ · (self * other)`. A factor that is a single atom of mass exactly
    /// `ν` contributes only its position, so identity factors are exact.
    pub fn convolve_over(&self, other: &AtomicMeasure, nu: f64) -> Result<AtomicMeasure> {
        let settings = MeasureSettings::default();
        for (single, rest) in [(other, self), (self, other)] {
            if let [atom] = single.atoms[..] {
                if atom.mass == nu {
                    return Ok(rest.shift_single(Atom::new(atom.position, 1.0), &settings).measure);
                }
            }
        }
        Ok(self.convolve(other)?.scale_unchecked(1.0 / nu))
    }

    fn shift_single(&self, atom: Atom, settings: &MeasureSettings) -> Pruned {
        let measure = if atom.position == 1.0 {
            self.scale_unchecked(atom.mass)
        } else {
            // multiplication by a positive constant is monotone; order is kept,
            // but gaps may shrink below the tolerance only by rounding, so recheck
            let atoms = self
                .atoms
                .iter()
                .map(|a| Atom::new(a.position * atom.position, a.mass * atom.mass))
                .collect();
            Self::canonicalize_valid(atoms, settings.merge_tol)
        };
        Pruned {
            measure,
            dropped_mass: 0.0,
        }
    }

    fn enforce_cap(self, settings: &MeasureSettings) -> Result<Pruned> {
        if self.atoms.len() <= settings.atom_cap {
            return Ok(Pruned {
                measure: self,
                dropped_mass: 0.0,
            });
        }
        match settings.overflow {
            Overflow::Error => Err(Error::AtomOverflow {
                count: self.atoms.len(),
                cap: settings.atom_cap,
            }),
            Overflow::Prune => Ok(self.prune_to(settings.atom_cap)),
        }
    }

    /// Keeps the `cap` heaviest atoms.
    pub fn prune_to(&self, cap: usize) -> Pruned {
        if self.atoms.len() <= cap {
            return Pruned {
                measure: self.clone(),
                dropped_mass: 0.0,
            };
        }
        let mut by_mass = self.atoms.clone();
        by_mass.sort_unstable_by(|a, b| b.mass.total_cmp(&a.mass));
        let dropped_mass = by_mass[cap..].iter().map(|a| a.mass).sum();
        by_mass.truncate(cap);
        by_mass.sort_unstable_by(|a, b| a.position.total_cmp(&b.position));
        Pruned {
            measure: AtomicMeasure { atoms: by_mass },
            dropped_mass,
        }
    }

    /// `u^{*n}`, with `u^{*0} = δ₁`.
    pub fn convolution_power(&self, n: u32) -> Result<AtomicMeasure> {
        let mut acc = AtomicMeasure::unit();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.convolve(&base)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.convolve(&base)?;
            }
        }
        Ok(acc)
    }

    /// `∫ x^s du`.
    pub fn mellin(&self, s: Complex64) -> Complex64 {
        if s.im == 0.0 {
            let re = s.re;
            let v: f64 = if re == 0.0 {
                self.total_mass()
            } else if re == 1.0 {
                self.first_moment()
            } else {
                self.atoms.iter().map(|a| a.mass * a.position.powf(re)).sum()
            };
            return Complex64::new(v, 0.0);
        }
        self.atoms.iter().map(|a| a.mass * (s * a.position.ln()).exp()).sum()
    }

    /// The image of the measure under `x ↦ x^a`.
    pub fn rescale_exponent(&self, a: f64) -> Result<AtomicMeasure> {
        if a == 0.0 || !a.is_finite() {
            return domain(format!("rescaling exponent must be nonzero and finite, got {a}"));
        }
        if a == 1.0 {
            return Ok(self.clone());
        }
        let atoms = self
            .atoms
            .iter()
            .map(|at| Atom::new(at.position.powf(a), at.mass))
            .collect();
        Ok(Self::canonicalize_valid(atoms, DEFAULT_MERGE_TOL))
    }

    /// Normed exponent `e^{−mass(ψ)} Σ_k ψ^{*k}/k!`, truncated at the
    /// smallest order whose omitted tails of both total mass and first
    /// moment are at most `policy.series_tail`.
    pub fn normed_exp(&self, policy: &TruncationPolicy) -> Result<AtomicMeasure> {
        policy.check_series()?;
        let order = normed_exp_order(self, policy.series_tail);
        let lambda = self.total_mass();
        let mut term = AtomicMeasure::unit();
        let mut parts = vec![term.clone()];
        for k in 1..=order {
            term = term.convolve(self)?.scale_unchecked(1.0 / k as f64);
            parts.push(term.clone());
        }
        Ok(AtomicMeasure::sum(parts.iter()).scale_unchecked((-lambda).exp()))
    }

    /// Mellin-grid distance with the default grid.
    pub fn distance(&self, other: &AtomicMeasure) -> f64 {
        MellinGrid::default().distance(self, other).value
    }

    /// Atom-by-atom comparison: equal atom counts, positions within
    /// `pos_tol` relative, masses within `mass_tol` absolute.
    pub fn atoms_close(&self, other: &AtomicMeasure, pos_tol: f64, mass_tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                (a.position - b.position).abs() <= pos_tol * a.position.max(b.position)
                    && (a.mass - b.mass).abs() <= mass_tol
            })
    }
}

/// Truncation order used by [`AtomicMeasure::normed_exp`].
pub fn normed_exp_order(psi: &AtomicMeasure, series_tail: f64) -> u32 {
    let lambda = psi.total_mass();
    let m1 = psi.first_moment();
    if lambda == 0.0 {
        return 0;
    }
    let fm_scale = (m1 - lambda).exp();
    let mut k: u32 = 0;
    loop {
        let mass_tail = poisson_upper_tail(lambda, k as u64 + 1);
        let fm_tail = fm_scale * poisson_upper_tail(m1, k as u64 + 1);
        if mass_tail <= series_tail && fm_tail <= series_tail {
            return k;
        }
        k += 1;
    }
}

fn check_atom(position: f64, mass: f64) -> Result<()> {
    if !(position > 0.0) || !position.is_finite() {
        return domain(format!("atom position must be positive and finite, got {position}"));
    }
    if !(mass >= 0.0) || !mass.is_finite() {
        return domain(format!("atom mass must be nonnegative and finite, got {mass}"));
    }
    Ok(())
}

#[derive(Default)]
struct Cluster {
    count: usize,
    anchor_log: f64,
    first_position: f64,
    same_position: bool,
    mass: f64,
    weighted_log: f64,
}

impl Cluster {
    fn start(a: Atom) -> Self {
        let l = a.position.ln();
        Cluster {
            count: 1,
            anchor_log: l,
            first_position: a.position,
            same_position: true,
            mass: a.mass,
            weighted_log: a.mass * l,
        }
    }

    fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn push(&mut self, a: Atom) {
        self.count += 1;
        self.same_position &= a.position == self.first_position;
        self.mass += a.mass;
        self.weighted_log += a.mass * a.position.ln();
    }

    fn finish(&self) -> Option<Atom> {
        if self.count == 0 {
            return None;
        }
        let position = if self.same_position {
            self.first_position
        } else {
            (self.weighted_log / self.mass).exp()
        };
        Some(Atom::new(position, self.mass))
    }
}

/// Finite set of Mellin exponents used to compare measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MellinGrid(pub Vec<Complex64>);

impl Default for MellinGrid {
    /// `{0, 1, ±i, ±2i, 1±i}`
    fn default() -> Self {
        let c = Complex64::new;
        MellinGrid(vec![
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(0.0, 1.0),
            c(0.0, -1.0),
            c(0.0, 2.0),
            c(0.0, -2.0),
            c(1.0, 1.0),
            c(1.0, -1.0),
        ])
    }
}

impl MellinGrid {
    pub fn points(&self) -> &[Complex64] {
        &self.0
    }

    pub fn distance(&self, u: &AtomicMeasure, v: &AtomicMeasure) -> MeasureDistance {
        let value = self
            .0
            .iter()
            .map(|&s| (u.mellin(s) - v.mellin(s)).norm())
            .fold(0.0, f64::max);
        MeasureDistance {
            mellin_grid: self.0.clone(),
            value,
        }
    }
}

/// `max_s |M(u,s) − M(v,s)|` over a Mellin grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDistance {
    pub mellin_grid: Vec<Complex64>,
    pub value: f64,
}

// Literal format: array of [position, mass] pairs.
impl Serialize for AtomicMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.atoms.iter().map(|a| [a.position, a.mass]))
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<[f64; 2]> = Vec::deserialize(deserializer)?;
        AtomicMeasure::canonicalize(raw.into_iter().map(|[x, w]| Atom::new(x, w)), DEFAULT_MERGE_TOL)
            .map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for AtomicMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, a) in self.atoms.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", a.position, a.mass)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs(pairs).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(m(&[(2.0, 1.0), (2.0, 1.0)]).to_pairs(), vec![(2.0, 2.0)]);
        assert_eq!(m(&[(3.0, 0.5), (2.0, 0.0)]).to_pairs(), vec![(3.0, 0.5)]);
        let close = AtomicMeasure::canonicalize([Atom::new(1.0, 1.0), Atom::new(1.0 + 1e-12, 1.0)], 1e-9).unwrap();
        assert_eq!(close.len(), 1);
        assert!((close.atoms()[0].position - 1.0).abs() < 1e-11);
        assert_eq!(close.total_mass(), 2.0);
    }

    #[test]
    fn canonicalize_rejects_bad_atoms() {
        assert!(matches!(
            AtomicMeasure::from_pairs(&[(0.0, 1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            AtomicMeasure::from_pairs(&[(-1.0, 1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            AtomicMeasure::from_pairs(&[(1.0, -1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(AtomicMeasure::canonicalize([Atom::new(1.0, 1.0)], -1.0).is_err());
    }

    #[test]
    fn merged_position_is_geometric_mean() {
        let u = AtomicMeasure::canonicalize([Atom::new(1.0, 1.0), Atom::new(1.0 + 1e-6, 3.0)], 1e-5).unwrap();
        let expect = (0.75 * (1.0f64 + 1e-6).ln()).exp();
        assert!((u.atoms()[0].position - expect).abs() < 1e-15);
    }

    #[test]
    fn convolve_examples() {
        let d6 = m(&[(2.0, 1.0)]).convolve(&m(&[(3.0, 1.0)])).unwrap();
        assert_eq!(d6.to_pairs(), vec![(6.0, 1.0)]);
        let one = m(&[(2.0, 0.5)]).convolve(&m(&[(0.5, 2.0)])).unwrap();
        assert_eq!(one.to_pairs(), vec![(1.0, 1.0)]);

        // pairs (2,2), (2,2/3), (2/3,2), (2/3,2/3)
        let u = m(&[(2.0, 1.0 / 8.0), (2.0 / 3.0, 3.0 / 8.0)]);
        let sq = u.convolve(&u).unwrap();
        let expect = m(&[(4.0 / 9.0, 9.0 / 64.0), (4.0 / 3.0, 6.0 / 64.0), (4.0, 1.0 / 64.0)]);
        assert!(sq.atoms_close(&expect, 1e-15, 1e-16));
    }

    #[test]
    fn mellin_examples() {
        // 2·(1/8) + (2/3)·(3/8) = 1/4 + 1/4
        let u = m(&[(2.0, 1.0 / 8.0), (2.0 / 3.0, 3.0 / 8.0)]);
        assert!((u.mellin(Complex64::new(1.0, 0.0)).re - 0.5).abs() < 1e-15);
        assert!((u.first_moment() - 0.5).abs() < 1e-15);
        assert_eq!(u.mellin(Complex64::new(0.0, 0.0)).re, 0.5);
        let s = Complex64::new(0.3, -1.7);
        let d = m(&[(5.0, 2.0)]);
        let expect = 2.0 * Complex64::new(5.0, 0.0).powc(s);
        assert!((d.mellin(s) - expect).norm() < 1e-14);
    }

    #[test]
    fn elementary_ops() {
        assert_eq!(m(&[(2.0, 1.0)]).add(&m(&[(2.0, 1.0)])).to_pairs(), vec![(2.0, 2.0)]);
        assert_eq!(m(&[(1.0, 5.0)]).abs_dev_mass(), 0.0);
        assert!(matches!(m(&[(1.0, 1.0)]).scale(-1.0), Err(Error::Domain(_))));
        assert!(m(&[(1.0, 1.0)]).scale(0.0).unwrap().is_zero());
        assert!(AtomicMeasure::delta(0.0, 1.0).is_err());
        assert!(AtomicMeasure::delta(2.0, 0.0).unwrap().is_zero());
    }

    #[test]
    fn rescale_examples() {
        let r = m(&[(4.0, 1.0)]).rescale_exponent(0.5).unwrap();
        assert_eq!(r.to_pairs(), vec![(2.0, 1.0)]);
        let u = m(&[(2.0, 0.3), (0.7, 0.2)]);
        assert_eq!(u.rescale_exponent(1.0).unwrap(), u);
        assert!(u.rescale_exponent(0.0).is_err());
        // negative exponents reverse the atom order
        let inv = u.rescale_exponent(-1.0).unwrap();
        assert!(inv.atoms()[0].position < inv.atoms()[1].position);
        assert!(inv.rescale_exponent(-1.0).unwrap().atoms_close(&u, 1e-15, 0.0));
    }

    #[test]
    fn normed_exp_of_zero_is_unit() {
        let e = AtomicMeasure::zero().normed_exp(&TruncationPolicy::default()).unwrap();
        assert_eq!(e, AtomicMeasure::unit());
    }

    #[test]
    fn normed_exp_single_atom_closed_form() {
        let lambda = 0.7;
        let policy = TruncationPolicy {
            series_tail: 1e-14,
            ..TruncationPolicy::default()
        };
        let e = m(&[(2.0, lambda)]).normed_exp(&policy).unwrap();
        for a in e.atoms() {
            let k = a.position.log2().round() as i32;
            let mut pk = (-lambda).exp();
            for j in 1..=k {
                pk *= lambda / j as f64;
            }
            assert!((a.mass - pk).abs() < 1e-16, "k={k}");
        }
        assert!(1.0 - e.total_mass() <= 1e-14);
        assert!(e.total_mass() <= 1.0 + 1e-15);
    }

    #[test]
    fn normed_exp_rejects_bad_tail() {
        let p = TruncationPolicy {
            series_tail: 0.0,
            ..TruncationPolicy::default()
        };
        assert!(matches!(m(&[(2.0, 1.0)]).normed_exp(&p), Err(Error::Config(_))));
    }

    #[test]
    fn atom_cap_errors_or_prunes() {
        let u = AtomicMeasure::from_pairs(&[(1.1, 1.0), (1.3, 1.0), (1.7, 1.0)]).unwrap();
        let strict = MeasureSettings {
            atom_cap: 4,
            ..MeasureSettings::default()
        };
        assert!(matches!(
            u.convolve_with(&u, &strict),
            Err(Error::AtomOverflow { count: 6, cap: 4 })
        ));
        let lossy = MeasureSettings {
            overflow: Overflow::Prune,
            ..strict
        };
        let p = u.convolve_with(&u, &lossy).unwrap();
        assert_eq!(p.measure.len(), 4);
        assert!((p.measure.total_mass() + p.dropped_mass - 9.0).abs() < 1e-12);
        assert_eq!(p.dropped_mass, 2.0);
    }

    #[test]
    fn literal_round_trip() {
        let u = m(&[(2.0, 0.125), (0.5, 3.0)]);
        let s = serde_json::to_string(&u).unwrap();
        assert_eq!(s, "[[0.5,3.0],[2.0,0.125]]");
        let back: AtomicMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, u);
        assert!(serde_json::from_str::<AtomicMeasure>("[[-1.0, 2.0]]").is_err());
    }

    #[test]
    fn power_matches_repeated_convolution() {
        let u = m(&[(2.0, 0.5), (3.0, 0.25)]);
        let p3 = u.convolution_power(3).unwrap();
        let r = u.convolve(&u).unwrap().convolve(&u).unwrap();
        assert!(p3.distance(&r) < 1e-14);
        assert_eq!(u.convolution_power(0).unwrap(), AtomicMeasure::unit());
    }
}
