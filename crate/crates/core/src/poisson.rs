//! Configurations on finite bordered spaces, Poisson measures, and the
//! functor ω sending a bordered polymorphism `P: M⋎ → N⋎` to an
//! ℝ*-polymorphism between the configuration spaces `Ω(M⋎) → Ω(N⋎)`.
//!
//! For configurations `φ` (multiplicities `p_i`) and `ψ` (multiplicities
//! `q_j`), write `S`, `T` for label sets with `p_i` labels at source point
//! `i` and `q_j` labels at target point `j`. Then
//!
//! ```text
//! ω_φψ = C · δ_h * exp∘[p_∞∞] * 1/(∏p_i! ∏q_j!) ·
//!        Σ_{partial bijections Q: S → T}
//!            ∏_{s ∈ Dom Q} p_{φ(s)ψ(Qs)} * ∏_{s ∉ Dom Q} p_{φ(s)∞} * ∏_{t ∉ Im Q} p_{∞ψ(t)}
//! C = exp(−Σ mass of every non-corner block)
//! h = exp(−Σ ∫(x−1) over every block, corner included)
//! ```
//!
//! [`omega_entry`] evaluates this literally by enumerating labeled partial
//! bijections and is kept as the oracle. [`omega_entry_collapsed`] groups
//! bijections by their matching counts `k_ij`: each type occurs
//! `∏p_i! ∏q_j! / (∏k_ij! ∏(p_i−r_i)! ∏(q_j−c_j)!)` times, `r`, `c` being
//! the row and column sums of `k`.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bordered::BorderedSpace;
use crate::bordered::{coarsen_v, VPolymorphism};
use crate::error::{structural, Error, Result};
use crate::measure::AtomicMeasure;
use crate::policy::{factorial, poisson_upper_tail, TruncationPolicy};
use crate::rstar::{FiniteSpace, Partition, RStarPolymorphism, ValidationReport};

/// Multiplicities at the finite points of a bordered space. The border
/// point carries infinite multiplicity implicitly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<u32>);

impl Configuration {
    pub fn zero(points: usize) -> Self {
        Configuration(vec![0; points])
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of points.
    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&p| factorial(p) as f64).product()
    }

    /// Multiplicities summed within the groups of a partition.
    pub fn coarsen(&self, partition: &Partition) -> Result<Configuration> {
        partition.check_len(self.len())?;
        let mut out = vec![0; partition.num_groups()];
        for (i, &p) in self.0.iter().enumerate() {
            out[partition.group(i)] += p;
        }
        Ok(Configuration(out))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// `∏_k μ_k^{p_k} e^{−μ_k} / p_k!`
pub fn poisson_mass(space: &BorderedSpace, c: &Configuration) -> Result<f64> {
    if c.len() != space.len() {
        return structural(format!(
            "configuration has {} entries, space has {} points",
            c.len(),
            space.len()
        ));
    }
    Ok(poisson_mass_of(space.masses(), c))
}

fn poisson_mass_of(masses: &[f64], c: &Configuration) -> f64 {
    masses
        .iter()
        .zip(&c.0)
        .map(|(&mu, &p)| {
            let mut term = (-mu).exp();
            for k in 1..=p {
                term *= mu / k as f64;
            }
            term
        })
        .product()
}

/// Omitted Poisson mass when each multiplicity is capped at `cap`.
pub fn poisson_tail(intensities: &[f64], cap: u32) -> f64 {
    // 1 − ∏(1 − t_i), computed without cancellation
    let log_kept: f64 = intensities
        .iter()
        .map(|&l| (-poisson_upper_tail(l, cap as u64 + 1)).ln_1p())
        .sum();
    -log_kept.exp_m1()
}

/// Every configuration with multiplicities at most the policy cap, in
/// lexicographic order. Errors when the omitted Poisson mass exceeds
/// `policy.tail_mass`.
pub fn enumerate_configs(space: &BorderedSpace, policy: &TruncationPolicy) -> Result<Vec<Configuration>> {
    policy.check()?;
    let cap = policy.max_multiplicity;
    let tail = poisson_tail(space.masses(), cap);
    if tail > policy.tail_mass {
        return Err(Error::Truncation {
            tail,
            allowed: policy.tail_mass,
            cap,
        });
    }
    Ok(configs_up_to(space.len(), cap))
}

/// Every configuration of `points` points with multiplicities at most `cap`,
/// in lexicographic order.
pub fn configs_up_to(points: usize, cap: u32) -> Vec<Configuration> {
    let mut out = vec![Configuration::zero(points)];
    for k in 0..points {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..=cap).map(move |p| {
                    let mut c = c.clone();
                    c.0[k] = p;
                    c
                })
            })
            .collect();
    }
    out
}

/// Per-polymorphism data shared by every entry of ω.
#[derive(Debug, Clone)]
pub struct OmegaPrefactor {
    /// `C`
    pub c: f64,
    /// `h`
    pub h: f64,
    /// `C · δ_h * exp∘[p_∞∞]`
    pub measure: AtomicMeasure,
}

impl OmegaPrefactor {
    pub fn new(p: &VPolymorphism, policy: &TruncationPolicy) -> Result<Self> {
        let non_corner: f64 = p
            .fin_fin()
            .iter()
            .flatten()
            .chain(p.fin_inf())
            .chain(p.inf_fin())
            .map(AtomicMeasure::total_mass)
            .sum();
        let drift: f64 = p.blocks().map(AtomicMeasure::signed_dev_mass).sum();
        let c = (-non_corner).exp();
        let h = (-drift).exp();
        let measure = p.inf_inf().normed_exp(policy)?.convolve(&AtomicMeasure::delta(h, c)?)?;
        Ok(OmegaPrefactor { c, h, measure })
    }
}

fn check_dims(p: &VPolymorphism, phi: &Configuration, psi: &Configuration) -> Result<()> {
    if phi.len() != p.source().len() || psi.len() != p.target().len() {
        return structural(format!(
            "configurations of lengths ({}, {}) for a {}→{} polymorphism",
            phi.len(),
            psi.len(),
            p.source().len(),
            p.target().len()
        ));
    }
    Ok(())
}

/// `ω_φψ` by enumeration of all labeled partial bijections.
pub fn omega_entry(
    p: &VPolymorphism,
    phi: &Configuration,
    psi: &Configuration,
    policy: &TruncationPolicy,
) -> Result<AtomicMeasure> {
    let pre = OmegaPrefactor::new(p, policy)?;
    omega_entry_labeled(p, &pre, phi, psi)
}

fn omega_entry_labeled(
    p: &VPolymorphism,
    pre: &OmegaPrefactor,
    phi: &Configuration,
    psi: &Configuration,
) -> Result<AtomicMeasure> {
    check_dims(p, phi, psi)?;
    let sources: Vec<usize> = expand_labels(phi);
    let targets: Vec<usize> = expand_labels(psi);
    let mut terms = Vec::new();
    let mut used = vec![false; targets.len()];
    labeled_dfs(p, &sources, &targets, 0, &mut used, AtomicMeasure::unit(), &mut terms)?;
    let bracket = AtomicMeasure::sum(terms.iter());
    let norm = 1.0 / (phi.factorial_product() * psi.factorial_product());
    pre.measure.convolve(&bracket.scale_unchecked(norm))
}

fn expand_labels(c: &Configuration) -> Vec<usize> {
    c.0.iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize))
        .collect()
}

/// Decides the fate of source label `s` (unmatched, or matched to an unused
/// target label); after the last source label, the remaining target labels
/// are immigrants from the border.
fn labeled_dfs(
    p: &VPolymorphism,
    sources: &[usize],
    targets: &[usize],
    s: usize,
    used: &mut [bool],
    acc: AtomicMeasure,
    out: &mut Vec<AtomicMeasure>,
) -> Result<()> {
    if acc.is_zero() {
        return Ok(());
    }
    if s == sources.len() {
        let mut term = acc;
        for (t, &j) in targets.iter().enumerate() {
            if !used[t] {
                term = term.convolve(&p.inf_fin()[j])?;
            }
        }
        if !term.is_zero() {
            out.push(term);
        }
        return Ok(());
    }
    let i = sources[s];
    labeled_dfs(p, sources, targets, s + 1, used, acc.convolve(&p.fin_inf()[i])?, out)?;
    for t in 0..targets.len() {
        if !used[t] {
            used[t] = true;
            let next = acc.convolve(&p.fin_fin()[i][targets[t]])?;
            labeled_dfs(p, sources, targets, s + 1, used, next, out)?;
            used[t] = false;
        }
    }
    Ok(())
}

/// Convolution powers `u^{*k}` for `k ≤ cap`.
struct Powers(Vec<AtomicMeasure>);

impl Powers {
    fn new(u: &AtomicMeasure, cap: u32) -> Result<Self> {
        let mut v = vec![AtomicMeasure::unit()];
        for k in 1..=cap as usize {
            let next = if u.is_zero() {
                AtomicMeasure::zero()
            } else {
                v[k - 1].convolve(u)?
            };
            v.push(next);
        }
        Ok(Powers(v))
    }

    fn get(&self, k: u32) -> &AtomicMeasure {
        &self.0[k as usize]
    }
}

/// Precomputed data for evaluating many collapsed entries of one polymorphism.
pub struct OmegaEvaluator<'a> {
    p: &'a VPolymorphism,
    prefactor: OmegaPrefactor,
    fin_fin: Vec<Vec<Powers>>,
    fin_inf: Vec<Powers>,
    inf_fin: Vec<Powers>,
}

impl<'a> OmegaEvaluator<'a> {
    /// Powers are tabulated up to `max_multiplicity`.
    pub fn new(p: &'a VPolymorphism, policy: &TruncationPolicy, max_multiplicity: u32) -> Result<Self> {
        let prefactor = OmegaPrefactor::new(p, policy)?;
        let cap = max_multiplicity;
        let fin_fin = p
            .fin_fin()
            .iter()
            .map(|row| row.iter().map(|m| Powers::new(m, cap)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let fin_inf = p
            .fin_inf()
            .iter()
            .map(|m| Powers::new(m, cap))
            .collect::<Result<Vec<_>>>()?;
        let inf_fin = p
            .inf_fin()
            .iter()
            .map(|m| Powers::new(m, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(OmegaEvaluator {
            p,
            prefactor,
            fin_fin,
            fin_inf,
            inf_fin,
        })
    }

    pub fn prefactor(&self) -> &OmegaPrefactor {
        &self.prefactor
    }

    fn cap(&self) -> u32 {
        self.fin_inf
            .first()
            .or(self.inf_fin.first())
            .map_or(u32::MAX, |p| p.0.len() as u32 - 1)
    }

    /// Collapsed evaluation of `ω_φψ`.
    pub fn entry(&self, phi: &Configuration, psi: &Configuration) -> Result<AtomicMeasure> {
        check_dims(self.p, phi, psi)?;
        let cap = self.cap();
        if phi.0.iter().chain(&psi.0).any(|&m| m > cap) {
            return structural(format!("multiplicity above the tabulated cap {cap}"));
        }
        let (s, t) = (phi.len(), psi.len());
        let mut state = TypeState {
            row_left: phi.0.clone(),
            col_left: psi.0.clone(),
            inv_fact: 1.0,
        };
        let mut terms = Vec::new();
        self.type_dfs(0, s * t, t, &mut state, AtomicMeasure::unit(), &mut terms)?;
        self.prefactor.measure.convolve(&AtomicMeasure::weighted_sum(terms))
    }

    /// Chooses `k_ij` for the cell `idx = i·t + j`, tracking the remaining
    /// row and column capacity.
    fn type_dfs(
        &self,
        idx: usize,
        cells: usize,
        t: usize,
        st: &mut TypeState,
        acc: AtomicMeasure,
        out: &mut Vec<(f64, AtomicMeasure)>,
    ) -> Result<()> {
        if acc.is_zero() {
            return Ok(());
        }
        if idx == cells {
            let mut term = acc;
            let mut coef = st.inv_fact;
            for (i, &left) in st.row_left.iter().enumerate() {
                if left > 0 {
                    term = term.convolve(self.fin_inf[i].get(left))?;
                    coef /= factorial(left) as f64;
                }
            }
            for (j, &left) in st.col_left.iter().enumerate() {
                if left > 0 {
                    term = term.convolve(self.inf_fin[j].get(left))?;
                    coef /= factorial(left) as f64;
                }
            }
            if !term.is_zero() {
                out.push((coef, term));
            }
            return Ok(());
        }
        let (i, j) = (idx / t, idx % t);
        let kmax = st.row_left[i].min(st.col_left[j]);
        let block = &self.fin_fin[i][j];
        for k in 0..=kmax {
            if k > 0 && self.p.fin_fin()[i][j].is_zero() {
                break;
            }
            let next = if k == 0 {
                acc.clone()
            } else {
                acc.convolve(block.get(k))?
            };
            st.row_left[i] -= k;
            st.col_left[j] -= k;
            let saved = st.inv_fact;
            st.inv_fact /= factorial(k) as f64;
            self.type_dfs(idx + 1, cells, t, st, next, out)?;
            st.inv_fact = saved;
            st.row_left[i] += k;
            st.col_left[j] += k;
        }
        Ok(())
    }
}

struct TypeState {
    row_left: Vec<u32>,
    col_left: Vec<u32>,
    inv_fact: f64,
}

/// `ω_φψ` summed over matching types.
pub fn omega_entry_collapsed(
    p: &VPolymorphism,
    phi: &Configuration,
    psi: &Configuration,
    policy: &TruncationPolicy,
) -> Result<AtomicMeasure> {
    check_dims(p, phi, psi)?;
    let cap = phi.0.iter().chain(&psi.0).copied().max().unwrap_or(0);
    OmegaEvaluator::new(p, policy, cap)?.entry(phi, psi)
}

/// Omitted-mass certificate for a truncated ω matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationCertificate {
    pub max_multiplicity: u32,
    /// Omitted Poisson mass of the source space.
    pub source_tail: f64,
    /// Omitted Poisson mass of the target space.
    pub target_tail: f64,
    /// Omitted mass of the target configuration under the unweighted routing
    /// law, intensities `Σ_i mass(p_ij) + mass(p_∞j)`. Bounds row residuals.
    pub routed_target_tail: f64,
    /// Omitted mass of the source configuration under the `x`-weighted law,
    /// intensities `Σ_j ∫x dp_ij + ∫x dp_i∞`. Bounds column residuals.
    pub weighted_source_tail: f64,
    pub series_tail: f64,
    /// `max(routed_target_tail, weighted_source_tail) + series_tail`
    pub bound: f64,
}

/// ω of a bordered polymorphism on truncated configuration spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    pub source_configs: Vec<Configuration>,
    pub target_configs: Vec<Configuration>,
    pub poly: RStarPolymorphism,
}

impl OmegaMatrix {
    pub fn source_index(&self, c: &Configuration) -> Option<usize> {
        self.source_configs.iter().position(|x| x == c)
    }

    pub fn target_index(&self, c: &Configuration) -> Option<usize> {
        self.target_configs.iter().position(|x| x == c)
    }

    pub fn entry(&self, phi: &Configuration, psi: &Configuration) -> Option<&AtomicMeasure> {
        Some(self.poly.entry(self.source_index(phi)?, self.target_index(psi)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaResult {
    pub matrix: OmegaMatrix,
    pub certificate: TruncationCertificate,
    pub validation: ValidationReport,
}

pub fn certificate(p: &VPolymorphism, policy: &TruncationPolicy) -> TruncationCertificate {
    let cap = policy.max_multiplicity;
    let routed: Vec<f64> = (0..p.target().len())
        .map(|j| p.fin_fin().iter().map(|r| r[j].total_mass()).sum::<f64>() + p.inf_fin()[j].total_mass())
        .collect();
    let weighted: Vec<f64> = p
        .fin_fin()
        .iter()
        .zip(p.fin_inf())
        .map(|(r, esc)| r.iter().map(AtomicMeasure::first_moment).sum::<f64>() + esc.first_moment())
        .collect();
    let routed_target_tail = poisson_tail(&routed, cap);
    let weighted_source_tail = poisson_tail(&weighted, cap);
    TruncationCertificate {
        max_multiplicity: cap,
        source_tail: poisson_tail(p.source().masses(), cap),
        target_tail: poisson_tail(p.target().masses(), cap),
        routed_target_tail,
        weighted_source_tail,
        series_tail: policy.series_tail,
        bound: routed_target_tail.max(weighted_source_tail) + policy.series_tail,
    }
}

/// The full truncated ω matrix, entries by the collapsed sum.
pub fn omega(p: &VPolymorphism, policy: &TruncationPolicy) -> Result<OmegaResult> {
    let sources = enumerate_configs(p.source(), policy)?;
    let targets = enumerate_configs(p.target(), policy)?;
    let matrix = omega_block(p, policy, sources, targets)?;
    let cert = certificate(p, policy);
    let validation = matrix.poly.validate(cert.bound);
    Ok(OmegaResult {
        matrix,
        certificate: cert,
        validation,
    })
}

/// ω restricted to the given source and target configurations. The spaces
/// of the returned polymorphism carry the Poisson masses of the listed
/// configurations.
pub fn omega_block(
    p: &VPolymorphism,
    policy: &TruncationPolicy,
    source_configs: Vec<Configuration>,
    target_configs: Vec<Configuration>,
) -> Result<OmegaMatrix> {
    let cap = source_configs
        .iter()
        .chain(&target_configs)
        .flat_map(|c| c.0.iter().copied())
        .max()
        .unwrap_or(0);
    let eval = OmegaEvaluator::new(p, policy, cap)?;
    let cols = target_configs.len();
    let flat = (0..source_configs.len() * cols)
        .into_par_iter()
        .map(|idx| eval.entry(&source_configs[idx / cols], &target_configs[idx % cols]))
        .collect::<Result<Vec<_>>>()?;
    let mut it = flat.into_iter();
    let entries = (0..source_configs.len())
        .map(|_| it.by_ref().take(cols).collect())
        .collect();
    let source = config_space(p.source(), &source_configs)?;
    let target = config_space(p.target(), &target_configs)?;
    Ok(OmegaMatrix {
        poly: RStarPolymorphism::new(source, target, entries)?,
        source_configs,
        target_configs,
    })
}

fn config_space(space: &BorderedSpace, configs: &[Configuration]) -> Result<FiniteSpace> {
    FiniteSpace::new(
        configs
            .iter()
            .map(|c| poisson_mass(space, c))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Pushes a truncated ω matrix forward along partitions of the finite points.
/// Only quotient configurations with every multiplicity at most `cap` are
/// kept; all their preimages lie in a fine enumeration with the same cap, so
/// the kept entries are complete sums.
pub fn pushforward(m: &OmegaMatrix, source_part: &Partition, target_part: &Partition, cap: u32) -> Result<OmegaMatrix> {
    let src = coarse_index(&m.source_configs, source_part, cap)?;
    let tgt = coarse_index(&m.target_configs, target_part, cap)?;
    let mut buckets: Vec<Vec<Vec<&AtomicMeasure>>> = vec![vec![Vec::new(); tgt.configs.len()]; src.configs.len()];
    for (a, row) in m.poly.entries().iter().enumerate() {
        let Some(i) = src.image[a] else { continue };
        for (b, e) in row.iter().enumerate() {
            if let Some(j) = tgt.image[b] {
                buckets[i][j].push(e);
            }
        }
    }
    let entries = buckets
        .into_iter()
        .map(|row| row.into_iter().map(AtomicMeasure::sum).collect())
        .collect();
    let source = FiniteSpace::new(src.masses(m.poly.source().masses()))?;
    let target = FiniteSpace::new(tgt.masses(m.poly.target().masses()))?;
    Ok(OmegaMatrix {
        source_configs: src.configs,
        target_configs: tgt.configs,
        poly: RStarPolymorphism::new(source, target, entries)?,
    })
}

struct CoarseIndex {
    configs: Vec<Configuration>,
    image: Vec<Option<usize>>,
}

impl CoarseIndex {
    fn masses(&self, fine: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.configs.len()];
        for (a, img) in self.image.iter().enumerate() {
            if let Some(i) = img {
                out[*i] += fine[a];
            }
        }
        out
    }
}

fn coarse_index(fine: &[Configuration], part: &Partition, cap: u32) -> Result<CoarseIndex> {
    let configs = configs_up_to(part.num_groups(), cap);
    let lookup: HashMap<&Configuration, usize> = configs.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let image = fine
        .iter()
        .map(|c| Ok(lookup.get(&c.coarsen(part)?).copied()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoarseIndex { configs, image })
}

/// ω of the coarsened polymorphism, for comparison with [`pushforward`].
pub fn omega_of_coarsened(
    p: &VPolymorphism,
    source_part: &Partition,
    target_part: &Partition,
    policy: &TruncationPolicy,
) -> Result<OmegaMatrix> {
    let c = coarsen_v(p, source_part, target_part)?;
    let cap = policy.max_multiplicity;
    omega_block(
        &c,
        policy,
        configs_up_to(c.source().len(), cap),
        configs_up_to(c.target().len(), cap),
    )
}

/// Distance between `ω(Q)∘ω(P)` and `ω(Q∘P)` on given source and target
/// configurations, the middle space enumerated under `policy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctorialityReport {
    pub max_distance: f64,
    /// Largest distance divided by its entry budget; at most 1 passes.
    pub max_ratio: f64,
    pub entries: usize,
    pub middle_configs: usize,
    pub passed: bool,
}

/// Budget for one entry: the missing row mass of `ω(P)`, the missing column
/// moment of `ω(Q)`, series truncation on both sides, and rounding.
pub fn entry_budget(row_deficit: f64, col_deficit: f64, series_tail: f64, entry: &AtomicMeasure) -> f64 {
    row_deficit.max(0.0) + col_deficit.max(0.0) + 4.0 * series_tail * (entry.total_mass() + entry.first_moment()) + 1e-8
}

pub fn functoriality(
    p: &VPolymorphism,
    q: &VPolymorphism,
    policy: &TruncationPolicy,
    source_configs: Vec<Configuration>,
    target_configs: Vec<Configuration>,
) -> Result<FunctorialityReport> {
    let mid = enumerate_configs(p.target(), policy)?;
    let wp = omega_block(p, policy, source_configs.clone(), mid.clone())?;
    let wq = omega_block(q, policy, mid.clone(), target_configs.clone())?;
    let composed = crate::rstar::compose(&wq.poly, &wp.poly)?;
    let direct = omega_block(
        &crate::bordered::compose_v(q, p)?,
        policy,
        source_configs.clone(),
        target_configs.clone(),
    )?;
    let col_def: Vec<f64> = target_configs
        .iter()
        .enumerate()
        .map(|(c, chi)| {
            Ok(poisson_mass(q.target(), chi)? - wq.poly.entries().iter().map(|row| row[c].first_moment()).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let (mut max_distance, mut max_ratio) = (0.0f64, 0.0f64);
    for (a, phi) in source_configs.iter().enumerate() {
        let row_def =
            poisson_mass(p.source(), phi)? - wp.poly.entries()[a].iter().map(AtomicMeasure::total_mass).sum::<f64>();
        for (c, col) in col_def.iter().enumerate() {
            let d = composed.entry(a, c).distance(direct.poly.entry(a, c));
            max_ratio = max_ratio.max(d / entry_budget(row_def, *col, policy.series_tail, direct.poly.entry(a, c)));
            max_distance = max_distance.max(d);
        }
    }
    Ok(FunctorialityReport {
        max_distance,
        max_ratio,
        entries: source_configs.len() * target_configs.len(),
        middle_configs: mid.len(),
        passed: max_ratio <= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bordered::embed_map;

    fn m(pairs: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs(pairs).unwrap()
    }

    fn cfg(v: &[u32]) -> Configuration {
        Configuration(v.to_vec())
    }

    fn one_point() -> VPolymorphism {
        let one = BorderedSpace::new(vec![0.8]).unwrap();
        let ff = m(&[(2.0, 0.3), (0.5, 0.2)]);
        let fi = m(&[(1.5, 0.3)]);
        let inf = m(&[(0.75, 0.4)]);
        let nu = BorderedSpace::new(vec![ff.first_moment() + inf.first_moment()]).unwrap();
        VPolymorphism::new(one, nu, vec![vec![ff]], vec![fi], vec![inf], m(&[(3.0, 0.2)])).unwrap()
    }

    #[test]
    fn poisson_mass_examples() {
        let one = BorderedSpace::new(vec![1.0]).unwrap();
        let e = (-1.0f64).exp();
        assert!((poisson_mass(&one, &cfg(&[0])).unwrap() - e).abs() < 1e-16);
        assert!((poisson_mass(&one, &cfg(&[2])).unwrap() - e / 2.0).abs() < 1e-16);
        assert_eq!(poisson_mass(&BorderedSpace::empty(), &cfg(&[])).unwrap(), 1.0);
        assert!(poisson_mass(&one, &cfg(&[1, 1])).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let s = BorderedSpace::new(vec![0.1]).unwrap();
        // P(Pois(0.1) ≥ 4) ≈ 3.85e-6
        let ok = enumerate_configs(&s, &TruncationPolicy::new(3, 1e-5, 1e-12).unwrap()).unwrap();
        assert_eq!(ok, vec![cfg(&[0]), cfg(&[1]), cfg(&[2]), cfg(&[3])]);
        let kept: f64 = ok.iter().map(|c| poisson_mass(&s, c).unwrap()).sum();
        assert!(kept >= 1.0 - 1e-5);
        assert!(matches!(
            enumerate_configs(&s, &TruncationPolicy::new(3, 1e-6, 1e-12).unwrap()),
            Err(Error::Truncation { .. })
        ));

        let empty = enumerate_configs(&BorderedSpace::empty(), &TruncationPolicy::default()).unwrap();
        assert_eq!(empty, vec![cfg(&[])]);

        let two = BorderedSpace::new(vec![1.0, 1.0]).unwrap();
        let err = enumerate_configs(&two, &TruncationPolicy::new(1, 0.1, 1e-12).unwrap()).unwrap_err();
        let Error::Truncation { tail, .. } = err else {
            panic!("{err:?}")
        };
        let kept = (2.0 / std::f64::consts::E).powi(2);
        assert!((tail - (1.0 - kept)).abs() < 1e-14);
    }

    #[test]
    fn tail_matches_enumerated_mass() {
        let s = BorderedSpace::new(vec![0.4, 0.7]).unwrap();
        let policy = TruncationPolicy::new(6, 1e-3, 1e-12).unwrap();
        let all = enumerate_configs(&s, &policy).unwrap();
        let kept: f64 = all.iter().map(|c| poisson_mass(&s, c).unwrap()).sum();
        assert!((1.0 - kept - poisson_tail(s.masses(), 6)).abs() < 1e-15);
    }

    #[test]
    fn empty_spaces_give_unit() {
        let p = VPolymorphism::pure_border(AtomicMeasure::zero());
        let e = omega_entry(&p, &cfg(&[]), &cfg(&[]), &TruncationPolicy::default()).unwrap();
        assert_eq!(e, AtomicMeasure::unit());
    }

    #[test]
    fn zero_configurations_give_prefactor() {
        let p = one_point();
        let policy = TruncationPolicy::default();
        let pre = OmegaPrefactor::new(&p, &policy).unwrap();
        let e = omega_entry(&p, &cfg(&[0]), &cfg(&[0]), &policy).unwrap();
        assert!(e.distance(&pre.measure) < 1e-16);
        let non_corner: f64 = 0.5 + 0.3 + 0.4;
        assert!((pre.c - (-non_corner).exp()).abs() < 1e-16);
        let drift: f64 = p.blocks().map(|b| b.signed_dev_mass()).sum();
        assert!((pre.h - (-drift).exp()).abs() < 1e-16);
    }

    #[test]
    fn single_pair_bracket() {
        // PB({s}, {t}) = {∅, s↦t}: bracket is p11 + p1∞ * p∞1
        let p = one_point();
        let policy = TruncationPolicy::default();
        let pre = OmegaPrefactor::new(&p, &policy).unwrap();
        let bracket = p.fin_fin()[0][0].add(&p.fin_inf()[0].convolve(&p.inf_fin()[0]).unwrap());
        let want = pre.measure.convolve(&bracket).unwrap();
        let got = omega_entry(&p, &cfg(&[1]), &cfg(&[1]), &policy).unwrap();
        assert!(got.distance(&want) < 1e-15);
        let collapsed = omega_entry_collapsed(&p, &cfg(&[1]), &cfg(&[1]), &policy).unwrap();
        assert!(collapsed.distance(&want) < 1e-15);
    }

    #[test]
    fn two_escapes_carry_half() {
        // p = (2), q = (0): one type, coefficient 1/2!
        let p = one_point();
        let policy = TruncationPolicy::default();
        let pre = OmegaPrefactor::new(&p, &policy).unwrap();
        let esc = &p.fin_inf()[0];
        let want = pre
            .measure
            .convolve(&esc.convolve(esc).unwrap().scale(0.5).unwrap())
            .unwrap();
        for got in [
            omega_entry(&p, &cfg(&[2]), &cfg(&[0]), &policy).unwrap(),
            omega_entry_collapsed(&p, &cfg(&[2]), &cfg(&[0]), &policy).unwrap(),
        ] {
            assert!(got.distance(&want) < 1e-15);
        }
    }

    #[test]
    fn labeled_and_collapsed_agree_small() {
        let p = one_point();
        let policy = TruncationPolicy::default();
        for a in 0..=3 {
            for b in 0..=3 {
                let l = omega_entry(&p, &cfg(&[a]), &cfg(&[b]), &policy).unwrap();
                let c = omega_entry_collapsed(&p, &cfg(&[a]), &cfg(&[b]), &policy).unwrap();
                assert!(l.distance(&c) < 1e-13, "({a},{b})");
            }
        }
    }

    #[test]
    fn identity_gives_diagonal_poisson() {
        let space = BorderedSpace::new(vec![0.3, 0.2]).unwrap();
        let id = embed_map(&space, &[0, 1], &space).unwrap();
        let policy = TruncationPolicy::new(4, 1e-3, 1e-12).unwrap();
        let r = omega(&id, &policy).unwrap();
        let mx = &r.matrix;
        for (a, phi) in mx.source_configs.iter().enumerate() {
            for (b, psi) in mx.target_configs.iter().enumerate() {
                let e = mx.poly.entry(a, b);
                if phi == psi {
                    let want = poisson_mass(&space, phi).unwrap();
                    assert_eq!(e.len(), 1);
                    assert_eq!(e.atoms()[0].position, 1.0);
                    assert!((e.total_mass() - want).abs() < 1e-16);
                } else {
                    assert!(e.is_zero(), "{phi} {psi}");
                }
            }
        }
        assert!(r.validation.max_residual() < 1e-15);
    }

    #[test]
    fn pure_border_gives_one_by_one_identity() {
        let p = VPolymorphism::pure_border(AtomicMeasure::zero());
        let r = omega(&p, &TruncationPolicy::default()).unwrap();
        assert_eq!(r.matrix.poly.entries().len(), 1);
        assert_eq!(r.matrix.poly.entry(0, 0), &AtomicMeasure::unit());
        assert_eq!(r.matrix.poly.source().masses(), &[1.0]);
    }

    #[test]
    fn one_point_marginals_within_certificate() {
        let p = one_point();
        let policy = TruncationPolicy::new(10, 1e-6, 1e-12).unwrap();
        let r = omega(&p, &policy).unwrap();
        assert!(r.certificate.bound < 1e-5);
        assert!(
            r.validation.max_residual() <= 10.0 * r.certificate.bound,
            "{:?} {:?}",
            r.validation,
            r.certificate
        );
    }

    #[test]
    fn superposition_of_two_points() {
        let fine = BorderedSpace::new(vec![1.0, 1.0]).unwrap();
        let coarse = BorderedSpace::new(vec![2.0]).unwrap();
        let part = Partition::all_in_one(2);
        for n in 0..6u32 {
            let total: f64 = configs_up_to(2, 6)
                .iter()
                .filter(|c| c.coarsen(&part).unwrap() == cfg(&[n]))
                .map(|c| poisson_mass(&fine, c).unwrap())
                .sum();
            let want = poisson_mass(&coarse, &cfg(&[n])).unwrap();
            assert!((total - want).abs() < 1e-15, "n={n}");
        }
        assert_eq!(
            cfg(&[2, 1, 4]).coarsen(&Partition::singletons(3)).unwrap(),
            cfg(&[2, 1, 4])
        );
    }

    #[test]
    fn collapsed_rejects_bad_dims() {
        let p = one_point();
        assert!(omega_entry_collapsed(&p, &cfg(&[1, 0]), &cfg(&[0]), &TruncationPolicy::default()).is_err());
        assert!(omega_entry(&p, &cfg(&[1]), &cfg(&[]), &TruncationPolicy::default()).is_err());
    }
}
