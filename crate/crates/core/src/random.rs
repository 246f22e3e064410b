//! Random valid instances for property tests, acceptance runs and benches.
//!
//! Atom positions are drawn from the lattice `2^a 3^b`, so repeated
//! convolutions merge atoms instead of multiplying their count.

use rand::Rng;

use crate::bordered::{BorderedSpace, VPolymorphism};
use crate::measure::AtomicMeasure;
use crate::rstar::{FiniteSpace, Partition, RStarPolymorphism};

/// Shape limits for generated instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    /// Largest number of atoms in a generated measure.
    pub max_atoms: usize,
    /// Lattice exponents range over `-max_exponent..=max_exponent`.
    pub max_exponent: i32,
    /// Probability that an optional entry is the zero measure.
    pub zero_prob: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_atoms: 3,
            max_exponent: 2,
            zero_prob: 0.2,
        }
    }
}

pub fn lattice_position<R: Rng + ?Sized>(rng: &mut R, max_exponent: i32) -> f64 {
    let a = rng.random_range(-max_exponent..=max_exponent);
    let b = rng.random_range(-max_exponent..=max_exponent);
    2f64.powi(a) * 3f64.powi(b)
}

/// Measure with 1 to `max_atoms` lattice atoms and the given total mass.
pub fn measure_with_mass<R: Rng + ?Sized>(rng: &mut R, params: &GenParams, total: f64) -> AtomicMeasure {
    if total <= 0.0 {
        return AtomicMeasure::zero();
    }
    let k = rng.random_range(1..=params.max_atoms.max(1));
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let pairs: Vec<(f64, f64)> = weights
        .iter()
        .map(|w| (lattice_position(rng, params.max_exponent), total * w / sum))
        .collect();
    AtomicMeasure::from_pairs(&pairs).expect("lattice atoms are valid")
}

/// Measure with random total mass in `[0.05, max_mass)`.
pub fn measure<R: Rng + ?Sized>(rng: &mut R, params: &GenParams, max_mass: f64) -> AtomicMeasure {
    let total = rng.random_range(0.05..max_mass.max(0.05 + f64::EPSILON));
    measure_with_mass(rng, params, total)
}

/// Masses uniform in `[lo, hi)`, optionally normalized to total 1.
pub fn space<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64, probability: bool) -> FiniteSpace {
    let mut m: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    if probability {
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= total);
    }
    FiniteSpace::new(m).expect("positive masses")
}

/// Random split of `total` into `n` nonnegative parts, at least one
/// positive; parts are zeroed with probability `zero_prob`.
fn split<R: Rng + ?Sized>(rng: &mut R, total: f64, n: usize, zero_prob: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(zero_prob) {
                0.0
            } else {
                rng.random_range(0.1..1.0)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        let k = rng.random_range(0..n);
        w[k] = 1.0;
    }
    let sum: f64 = w.iter().sum();
    w.iter().map(|x| total * x / sum).collect()
}

/// Valid ℝ*-polymorphism out of `source` onto `targets` points. The target
/// masses are the column first moments, so some column must be reachable;
/// every column receives at least one nonzero entry.
pub fn rstar<R: Rng + ?Sized>(
    rng: &mut R,
    params: &GenParams,
    source: &FiniteSpace,
    targets: usize,
) -> RStarPolymorphism {
    assert!(targets > 0 && !source.is_empty());
    let mut entries: Vec<Vec<AtomicMeasure>> = source
        .masses()
        .iter()
        .map(|&alpha| {
            split(rng, alpha, targets, params.zero_prob)
                .into_iter()
                .map(|w| measure_with_mass(rng, params, w))
                .collect()
        })
        .collect();
    // Give empty columns a share of some row.
    for j in 0..targets {
        if entries.iter().all(|row| row[j].is_zero()) {
            let i = rng.random_range(0..entries.len());
            let donor = (0..targets).find(|&k| !entries[i][k].is_zero()).expect("row has mass");
            let half = entries[i][donor].scale(0.5).expect("positive scale");
            entries[i][donor] = half.clone();
            entries[i][j] = measure_with_mass(rng, params, half.total_mass());
        }
    }
    let target: Vec<f64> = (0..targets)
        .map(|j| entries.iter().map(|r| r[j].first_moment()).sum())
        .collect();
    RStarPolymorphism::new(
        source.clone(),
        FiniteSpace::new(target).expect("columns reached"),
        entries,
    )
    .expect("consistent shapes")
}

/// Chain `P₁: A₀ → A₁, P₂: A₁ → A₂, …` with the given numbers of points.
pub fn rstar_chain<R: Rng + ?Sized>(rng: &mut R, params: &GenParams, sizes: &[usize]) -> Vec<RStarPolymorphism> {
    let mut src = space(rng, sizes[0], 0.2, 1.0, true);
    let mut out = Vec::new();
    for &n in &sizes[1..] {
        let p = rstar(rng, params, &src, n);
        src = p.target().clone();
        out.push(p);
    }
    out
}

/// Random partition of `n` points into `groups` nonempty groups.
pub fn partition<R: Rng + ?Sized>(rng: &mut R, n: usize, groups: usize) -> Partition {
    assert!(groups >= 1 && groups <= n);
    let mut labels: Vec<usize> = (0..n)
        .map(|i| if i < groups { i } else { rng.random_range(0..groups) })
        .collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    Partition::new(labels).expect("every group used")
}

/// Fine space whose group sums under `partition` equal `coarse`.
pub fn refine<R: Rng + ?Sized>(rng: &mut R, coarse: &FiniteSpace, partition: &Partition) -> FiniteSpace {
    let mut weights: Vec<f64> = (0..partition.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut sums = vec![0.0; partition.num_groups()];
    for (i, w) in weights.iter().enumerate() {
        sums[partition.group(i)] += w;
    }
    for (i, w) in weights.iter_mut().enumerate() {
        let g = partition.group(i);
        *w *= coarse.masses()[g] / sums[g];
    }
    FiniteSpace::new(weights).expect("positive masses")
}

/// Scale for the masses of a bordered instance: finite masses, border
/// escapes and border immigrants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderScale {
    pub escape_prob: f64,
    pub max_immigrant_mass: f64,
    pub max_corner_mass: f64,
}

impl Default for BorderScale {
    fn default() -> Self {
        BorderScale {
            escape_prob: 0.8,
            max_immigrant_mass: 0.3,
            max_corner_mass: 0.3,
        }
    }
}

/// Valid ⋎-polymorphism out of `source` onto `targets` finite points.
pub fn vpoly<R: Rng + ?Sized>(
    rng: &mut R,
    params: &GenParams,
    scale: &BorderScale,
    source: &BorderedSpace,
    targets: usize,
) -> VPolymorphism {
    let s = source.len();
    let mut fin_fin = vec![vec![AtomicMeasure::zero(); targets]; s];
    let mut fin_inf = vec![AtomicMeasure::zero(); s];
    for (i, &mu) in source.masses().iter().enumerate() {
        let escapes = rng.random_bool(scale.escape_prob) || targets == 0;
        let parts = split(rng, mu, targets + escapes as usize, params.zero_prob);
        for j in 0..targets {
            fin_fin[i][j] = measure_with_mass(rng, params, parts[j]);
        }
        if escapes {
            fin_inf[i] = measure_with_mass(rng, params, parts[targets]);
        }
    }
    let inf_fin: Vec<AtomicMeasure> = (0..targets)
        .map(|_| measure(rng, params, scale.max_immigrant_mass))
        .collect();
    let inf_inf = if rng.random_bool(0.8) {
        measure(rng, params, scale.max_corner_mass)
    } else {
        AtomicMeasure::zero()
    };
    let nu: Vec<f64> = (0..targets)
        .map(|j| fin_fin.iter().map(|r| r[j].first_moment()).sum::<f64>() + inf_fin[j].first_moment())
        .collect();
    VPolymorphism::new(
        source.clone(),
        BorderedSpace::new(nu).expect("immigrants give every column mass"),
        fin_fin,
        fin_inf,
        inf_fin,
        inf_inf,
    )
    .expect("consistent shapes")
}

/// Chain of ⋎-polymorphisms with the given finite sizes; source masses in
/// `[lo, hi)`.
pub fn vpoly_chain<R: Rng + ?Sized>(
    rng: &mut R,
    params: &GenParams,
    scale: &BorderScale,
    sizes: &[usize],
    lo: f64,
    hi: f64,
) -> Vec<VPolymorphism> {
    let mut src = BorderedSpace::new(space(rng, sizes[0], lo, hi, false).masses().to_vec()).expect("positive");
    let mut out = Vec::new();
    for &n in &sizes[1..] {
        let p = vpoly(rng, params, scale, &src, n);
        src = p.target().clone();
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_rstar_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=4);
            let chain = rstar_chain(&mut rng, &GenParams::default(), &[n, 3, 2]);
            for p in &chain {
                assert!(p.validate(1e-12).accepted);
                assert!(p.entries().iter().flatten().all(|e| e.len() <= 3));
            }
            assert!(chain[1].source().matches(chain[0].target()));
        }
    }

    #[test]
    fn generated_vpoly_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(0..=3)).collect();
            let chain = vpoly_chain(
                &mut rng,
                &GenParams::default(),
                &BorderScale::default(),
                &sizes,
                0.2,
                1.0,
            );
            for p in &chain {
                assert!(p.validate(1e-12).accepted);
            }
        }
    }

    #[test]
    fn refine_preserves_group_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coarse = space(&mut rng, 2, 0.2, 1.0, true);
        let part = partition(&mut rng, 5, 2);
        let fine = refine(&mut rng, &coarse, &part);
        let q = fine.quotient(&part).unwrap();
        for (a, b) in q.masses().iter().zip(coarse.masses()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
