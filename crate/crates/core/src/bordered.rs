//! Polymorphisms of finite bordered spaces.
//!
//! A bordered space is a finite space `M` with point masses `μ_1..μ_s` plus
//! a formal point at infinity. A polymorphism `P: M⋎ → N⋎` is an
//! `(s+1)×(t+1)` block matrix of measures on ℝ*:
//!
//! ```text
//!        N (t points)        ∞
//! M   [ fin_fin[i][j]   | fin_inf[i] ]
//! ∞   [ inf_fin[j]      | inf_inf    ]
//! ```
//!
//! `fin_inf[i]` is what leaves source point `i` towards the target border,
//! `inf_fin[j]` what arrives at target point `j` from the source border.
//! Constraints:
//!
//! * `Σ_j mass(p_ij) + mass(p_i∞) = μ_i`
//! * `Σ_i ∫x dp_ij + ∫x dp_∞j = ν_j`
//!
//! The product of `P: M⋎ → N⋎` and `Q: N⋎ → K⋎` (first `P`, then `Q`),
//! with `D = diag(ν_j⁻¹)` over the finite points of `N`:
//!
//! ```text
//! R_ff = P_ff·D·Q_ff
//! R_f∞ = P_ff·D·Q_f∞ + P_f∞
//! R_∞f = P_∞f·D·Q_ff + Q_∞f
//! R_∞∞ = P_∞f·D·Q_f∞ + p_∞∞ + q_∞∞
//! ```
//!
//! The border never enters `D`; it only contributes additively.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Error, Result};
use crate::measure::AtomicMeasure;
use crate::rstar::{
    coarsen_matrix, mellin_matrix, ComplexMatrix, FiniteSpace, Partition, RStarPolymorphism, ValidationReport,
};

/// A finite space plus the implicit border point. May have no finite points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BorderedSpace {
    finite: FiniteSpace,
}

impl BorderedSpace {
    pub fn new(finite_masses: Vec<f64>) -> Result<Self> {
        Ok(BorderedSpace {
            finite: FiniteSpace::new(finite_masses)?,
        })
    }

    pub fn empty() -> Self {
        BorderedSpace {
            finite: FiniteSpace::new(Vec::new()).expect("empty space"),
        }
    }

    pub fn finite(&self) -> &FiniteSpace {
        &self.finite
    }

    pub fn masses(&self) -> &[f64] {
        self.finite.masses()
    }

    /// Number of finite points.
    pub fn len(&self) -> usize {
        self.finite.len()
    }

    pub fn is_empty(&self) -> bool {
        self.finite.is_empty()
    }

    pub fn matches(&self, other: &BorderedSpace) -> bool {
        self.finite.matches(&other.finite)
    }

    pub fn quotient(&self, partition: &Partition) -> Result<BorderedSpace> {
        Ok(BorderedSpace {
            finite: self.finite.quotient(partition)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VRaw", into = "VRaw")]
pub struct VPolymorphism {
    source: BorderedSpace,
    target: BorderedSpace,
    fin_fin: Vec<Vec<AtomicMeasure>>,
    fin_inf: Vec<AtomicMeasure>,
    inf_fin: Vec<AtomicMeasure>,
    inf_inf: AtomicMeasure,
}

/// Instance-file layout.
#[derive(Serialize, Deserialize)]
struct VRaw {
    source_masses: Vec<f64>,
    target_masses: Vec<f64>,
    fin_fin: Vec<Vec<AtomicMeasure>>,
    fin_inf: Vec<AtomicMeasure>,
    inf_fin: Vec<AtomicMeasure>,
    inf_inf: AtomicMeasure,
}

impl TryFrom<VRaw> for VPolymorphism {
    type Error = Error;
    fn try_from(r: VRaw) -> Result<Self> {
        VPolymorphism::new(
            BorderedSpace::new(r.source_masses)?,
            BorderedSpace::new(r.target_masses)?,
            r.fin_fin,
            r.fin_inf,
            r.inf_fin,
            r.inf_inf,
        )
    }
}

impl From<VPolymorphism> for VRaw {
    fn from(p: VPolymorphism) -> Self {
        VRaw {
            source_masses: p.source.masses().to_vec(),
            target_masses: p.target.masses().to_vec(),
            fin_fin: p.fin_fin,
            fin_inf: p.fin_inf,
            inf_fin: p.inf_fin,
            inf_inf: p.inf_inf,
        }
    }
}

impl VPolymorphism {
    /// Checks block shapes only; see [`VPolymorphism::validate`].
    pub fn new(
        source: BorderedSpace,
        target: BorderedSpace,
        fin_fin: Vec<Vec<AtomicMeasure>>,
        fin_inf: Vec<AtomicMeasure>,
        inf_fin: Vec<AtomicMeasure>,
        inf_inf: AtomicMeasure,
    ) -> Result<Self> {
        let (s, t) = (source.len(), target.len());
        if fin_fin.len() != s || fin_fin.iter().any(|r| r.len() != t) {
            return structural(format!("fin_fin block must be {s}×{t}"));
        }
        if fin_inf.len() != s {
            return structural(format!("fin_inf has {} entries, expected {s}", fin_inf.len()));
        }
        if inf_fin.len() != t {
            return structural(format!("inf_fin has {} entries, expected {t}", inf_fin.len()));
        }
        Ok(VPolymorphism {
            source,
            target,
            fin_fin,
            fin_inf,
            inf_fin,
            inf_inf,
        })
    }

    pub fn identity(space: &BorderedSpace) -> Self {
        let perm: Vec<usize> = (0..space.len()).collect();
        embed_map(space, &perm, space).expect("identity permutation")
    }

    /// Pure-border polymorphism between empty bordered spaces.
    pub fn pure_border(inf_inf: AtomicMeasure) -> Self {
        VPolymorphism {
            source: BorderedSpace::empty(),
            target: BorderedSpace::empty(),
            fin_fin: Vec::new(),
            fin_inf: Vec::new(),
            inf_fin: Vec::new(),
            inf_inf,
        }
    }

    pub fn source(&self) -> &BorderedSpace {
        &self.source
    }

    pub fn target(&self) -> &BorderedSpace {
        &self.target
    }

    pub fn fin_fin(&self) -> &[Vec<AtomicMeasure>] {
        &self.fin_fin
    }

    pub fn fin_inf(&self) -> &[AtomicMeasure] {
        &self.fin_inf
    }

    pub fn inf_fin(&self) -> &[AtomicMeasure] {
        &self.inf_fin
    }

    pub fn inf_inf(&self) -> &AtomicMeasure {
        &self.inf_inf
    }

    /// Every block measure, corner included.
    pub fn blocks(&self) -> impl Iterator<Item = &AtomicMeasure> {
        self.fin_fin
            .iter()
            .flatten()
            .chain(&self.fin_inf)
            .chain(&self.inf_fin)
            .chain(std::iter::once(&self.inf_inf))
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        let row = self
            .fin_fin
            .iter()
            .zip(&self.fin_inf)
            .zip(self.source.masses())
            .map(|((r, esc), mu)| {
                let m: f64 = r.iter().map(AtomicMeasure::total_mass).sum::<f64>() + esc.total_mass();
                (m - mu).abs()
            })
            .fold(0.0, f64::max);
        let col = (0..self.target.len())
            .map(|j| {
                let m: f64 =
                    self.fin_fin.iter().map(|r| r[j].first_moment()).sum::<f64>() + self.inf_fin[j].first_moment();
                (m - self.target.masses()[j]).abs()
            })
            .fold(0.0, f64::max);
        ValidationReport::new(row, col, tol)
    }

    /// `P` followed by `next`.
    pub fn then(&self, next: &VPolymorphism) -> Result<VPolymorphism> {
        compose_v(next, self)
    }

    /// Blockwise maximum Mellin-grid distance.
    pub fn distance(&self, other: &VPolymorphism) -> Result<f64> {
        if self.source.len() != other.source.len() || self.target.len() != other.target.len() {
            return structural("shapes differ");
        }
        Ok(self
            .blocks()
            .zip(other.blocks())
            .map(|(u, v)| u.distance(v))
            .fold(0.0, f64::max))
    }

    /// Forgetful conversion when all border blocks vanish.
    pub fn to_rstar(&self) -> Result<RStarPolymorphism> {
        if self.fin_inf.iter().chain(&self.inf_fin).any(|m| !m.is_zero()) || !self.inf_inf.is_zero() {
            return structural("border blocks are not zero");
        }
        RStarPolymorphism::new(
            self.source.finite().clone(),
            self.target.finite().clone(),
            self.fin_fin.clone(),
        )
    }

    /// An ℝ*-polymorphism as a bordered one with empty border blocks.
    pub fn from_rstar(p: &RStarPolymorphism) -> Self {
        VPolymorphism {
            source: BorderedSpace {
                finite: p.source().clone(),
            },
            target: BorderedSpace {
                finite: p.target().clone(),
            },
            fin_fin: p.entries().to_vec(),
            fin_inf: vec![AtomicMeasure::zero(); p.source().len()],
            inf_fin: vec![AtomicMeasure::zero(); p.target().len()],
            inf_inf: AtomicMeasure::zero(),
        }
    }

    /// Complex images of the four blocks at a Mellin exponent.
    pub fn mellin_image(&self, s: Complex64) -> BlockImage {
        BlockImage {
            fin_fin: mellin_matrix(&self.fin_fin, s),
            fin_inf: self.fin_inf.iter().map(|m| m.mellin(s)).collect(),
            inf_fin: self.inf_fin.iter().map(|m| m.mellin(s)).collect(),
            inf_inf: self.inf_inf.mellin(s),
        }
    }
}

/// Block images of a bordered polymorphism under one Mellin evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockImage {
    pub fin_fin: ComplexMatrix,
    pub fin_inf: Vec<Complex64>,
    pub inf_fin: Vec<Complex64>,
    pub inf_inf: Complex64,
}

/// `Σ_j ν_j⁻¹ · left_j * right_j`
fn weighted_pairs<'a>(
    left: impl Iterator<Item = &'a AtomicMeasure>,
    right: impl Iterator<Item = &'a AtomicMeasure>,
    weights: &[f64],
) -> Result<Vec<(f64, AtomicMeasure)>> {
    left.zip(right)
        .zip(weights)
        .filter(|((l, r), _)| !l.is_zero() && !r.is_zero())
        .map(|((l, r), nu)| Ok((1.0, l.convolve_over(r, *nu)?)))
        .collect()
}

/// `Q ∘ P`: first `p: M⋎ → N⋎`, then `q: N⋎ → K⋎`.
pub fn compose_v(q: &VPolymorphism, p: &VPolymorphism) -> Result<VPolymorphism> {
    if !p.target.matches(&q.source) {
        return structural("target of the first polymorphism differs from source of the second");
    }
    let nu = p.target.masses();
    let (s, r) = (p.source.len(), q.target.len());
    let q_col = |k: usize| q.fin_fin.iter().map(move |row| &row[k]);

    let fin_fin_flat = (0..s * r)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / r, idx % r);
            Ok(AtomicMeasure::weighted_sum(weighted_pairs(
                p.fin_fin[i].iter(),
                q_col(k),
                nu,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = fin_fin_flat.into_iter();
    let fin_fin = (0..s).map(|_| it.by_ref().take(r).collect()).collect();

    let fin_inf = (0..s)
        .map(|i| {
            let mut terms = weighted_pairs(p.fin_fin[i].iter(), q.fin_inf.iter(), nu)?;
            terms.push((1.0, p.fin_inf[i].clone()));
            Ok(AtomicMeasure::weighted_sum(terms))
        })
        .collect::<Result<Vec<_>>>()?;

    let inf_fin = (0..r)
        .map(|k| {
            let mut terms = weighted_pairs(p.inf_fin.iter(), q_col(k), nu)?;
            terms.push((1.0, q.inf_fin[k].clone()));
            Ok(AtomicMeasure::weighted_sum(terms))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut corner = weighted_pairs(p.inf_fin.iter(), q.fin_inf.iter(), nu)?;
    corner.push((1.0, p.inf_inf.clone()));
    corner.push((1.0, q.inf_inf.clone()));
    let inf_inf = AtomicMeasure::weighted_sum(corner);

    Ok(VPolymorphism {
        source: p.source.clone(),
        target: q.target.clone(),
        fin_fin,
        fin_inf,
        inf_fin,
        inf_inf,
    })
}

/// Embeds the measure-scaling bijection `i ↦ perm[i]` of finite points:
/// `fin_fin[i][perm[i]] = μ_i · δ_{ν_perm(i) / μ_i}`, all else zero.
pub fn embed_map(source: &BorderedSpace, perm: &[usize], target: &BorderedSpace) -> Result<VPolymorphism> {
    let (s, t) = (source.len(), target.len());
    if perm.len() != s || s != t {
        return structural(format!(
            "a bijection needs equal sizes, got {s} → {t} with {} images",
            perm.len()
        ));
    }
    let mut hit = vec![false; t];
    for &j in perm {
        if j >= t || hit[j] {
            return structural("map of finite points is not a bijection");
        }
        hit[j] = true;
    }
    let mut fin_fin = vec![vec![AtomicMeasure::zero(); t]; s];
    for (i, &j) in perm.iter().enumerate() {
        let mu = source.masses()[i];
        fin_fin[i][j] = AtomicMeasure::delta(target.masses()[j] / mu, mu)?;
    }
    Ok(VPolymorphism {
        source: source.clone(),
        target: target.clone(),
        fin_fin,
        fin_inf: vec![AtomicMeasure::zero(); s],
        inf_fin: vec![AtomicMeasure::zero(); t],
        inf_inf: AtomicMeasure::zero(),
    })
}

/// Groups finite points; the border stays the border.
pub fn coarsen_v(p: &VPolymorphism, source_part: &Partition, target_part: &Partition) -> Result<VPolymorphism> {
    let source = p.source.quotient(source_part)?;
    let target = p.target.quotient(target_part)?;
    let fin_fin = coarsen_matrix(&p.fin_fin, source_part, target_part);
    let fin_inf = group_sums(&p.fin_inf, source_part);
    let inf_fin = group_sums(&p.inf_fin, target_part);
    Ok(VPolymorphism {
        source,
        target,
        fin_fin,
        fin_inf,
        inf_fin,
        inf_inf: p.inf_inf.clone(),
    })
}

fn group_sums(v: &[AtomicMeasure], part: &Partition) -> Vec<AtomicMeasure> {
    let mut buckets: Vec<Vec<&AtomicMeasure>> = vec![Vec::new(); part.num_groups()];
    for (i, m) in v.iter().enumerate() {
        buckets[part.group(i)].push(m);
    }
    buckets.into_iter().map(AtomicMeasure::sum).collect()
}

/// Higher-order terms `A+εA₁`, `εb+ε²b₁`, `εc+ε²c₁`, `1+ε²d+ε³d₁` added to
/// the scalar embedding of one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HigherOrderTerms {
    pub fin_fin: ComplexMatrix,
    pub fin_inf: Vec<Complex64>,
    pub inf_fin: Vec<Complex64>,
    pub inf_inf: Complex64,
}

/// Outcome of the ε-degeneration cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerationReport {
    pub epsilon: f64,
    /// `max |X_ff − img(R_ff)·D|` (order ε⁰)
    pub fin_fin: f64,
    /// `max |X_f∞/ε − img(R_f∞)|`
    pub fin_inf: f64,
    /// `max |X_∞f/ε − img(R_∞f)·D|`
    pub inf_fin: f64,
    /// `|(X_∞∞ − 1)/ε² − img(R_∞∞)|`
    pub inf_inf: f64,
    pub residual: f64,
}

/// Embeds `P` and `Q` at exponent `s` as ordinary complex block matrices
///
/// ```text
/// [ A      εb     ]
/// [ εc     1+ε²d  ]
/// ```
///
/// with `A = img(P_ff)·D`, `b = img(P_f∞)`, `c = img(P_∞f)·D`,
/// `d = img(p_∞∞)` and `D` the inverse target masses, multiplies them, and
/// compares the ε⁰, ε¹, ε² coefficients with the image of `compose_v(q, p)`.
pub fn eps_degeneration_check(
    p: &VPolymorphism,
    q: &VPolymorphism,
    s: Complex64,
    eps: f64,
    higher_order: Option<(&HigherOrderTerms, &HigherOrderTerms)>,
) -> Result<DegenerationReport> {
    if !(eps > 0.0) {
        return domain(format!("ε must be positive, got {eps}"));
    }
    let r = compose_v(q, p)?;
    let xp = embed_scalar(p, s, eps, higher_order.map(|h| h.0))?;
    let xq = embed_scalar(q, s, eps, higher_order.map(|h| h.1))?;
    let x = matmul(&xp, &xq);

    let img = r.mellin_image(s);
    let dk: Vec<f64> = r.target.masses().iter().map(|m| 1.0 / m).collect();
    let (m, k) = (r.source.len(), r.target.len());
    let mut report = DegenerationReport {
        epsilon: eps,
        fin_fin: 0.0,
        fin_inf: 0.0,
        inf_fin: 0.0,
        inf_inf: 0.0,
        residual: 0.0,
    };
    for i in 0..m {
        for j in 0..k {
            report.fin_fin = report.fin_fin.max((x[i][j] - img.fin_fin[i][j] * dk[j]).norm());
        }
        report.fin_inf = report.fin_inf.max((x[i][k] / eps - img.fin_inf[i]).norm());
    }
    for j in 0..k {
        report.inf_fin = report.inf_fin.max((x[m][j] / eps - img.inf_fin[j] * dk[j]).norm());
    }
    report.inf_inf = ((x[m][k] - 1.0) / (eps * eps) - img.inf_inf).norm();
    report.residual = report
        .fin_fin
        .max(report.fin_inf)
        .max(report.inf_fin)
        .max(report.inf_inf);
    Ok(report)
}

fn embed_scalar(p: &VPolymorphism, s: Complex64, eps: f64, extra: Option<&HigherOrderTerms>) -> Result<ComplexMatrix> {
    let img = p.mellin_image(s);
    let (m, n) = (p.source.len(), p.target.len());
    if let Some(h) = extra {
        if h.fin_fin.len() != m
            || h.fin_fin.iter().any(|r| r.len() != n)
            || h.fin_inf.len() != m
            || h.inf_fin.len() != n
        {
            return structural("higher-order terms do not match the block shape");
        }
    }
    let d: Vec<f64> = p.target.masses().iter().map(|x| 1.0 / x).collect();
    let e = Complex64::new(eps, 0.0);
    let mut x = vec![vec![Complex64::new(0.0, 0.0); n + 1]; m + 1];
    for i in 0..m {
        for j in 0..n {
            x[i][j] = img.fin_fin[i][j] * d[j] + extra.map_or(0.0.into(), |h| e * h.fin_fin[i][j]);
        }
        x[i][n] = e * img.fin_inf[i] + extra.map_or(0.0.into(), |h| e * e * h.fin_inf[i]);
    }
    for j in 0..n {
        x[m][j] = e * img.inf_fin[j] * d[j] + extra.map_or(0.0.into(), |h| e * e * h.inf_fin[j]);
    }
    x[m][n] = 1.0 + e * e * img.inf_inf + extra.map_or(0.0.into(), |h| e * e * e * h.inf_inf);
    Ok(x)
}

fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|k| row.iter().zip(b).map(|(x, brow)| x * brow[k]).sum())
                .collect()
        })
        .collect()
}
