use clap::ValueEnum;
use serde::Serialize;
use spreadmaps::bordered::{compose_v, eps_degeneration_check};
use spreadmaps::mellin_oracle::{compose_shadows, shadow_of_v};
use spreadmaps::poisson::{configs_up_to, enumerate_configs, functoriality, omega_entry_collapsed, Configuration};
use spreadmaps::rstar::{compose, t_operator, weighted_matmul};
use spreadmaps::{AtomicMeasure, Complex64, VPolymorphism};

use crate::failure::Failure;
use crate::instance::{Poly, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Semiring,
    Assoc,
    Functorial,
    Mellin,
    Degeneration,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"max"`: value must not exceed limit; `"min"`: must not fall below.
    pub bound: &'static str,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound: "max",
            limit,
            passed: value <= limit,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound: "min",
            limit,
            passed: value >= limit,
        }
    }
}

/// What a suite runs on: a measure pool or one or two polymorphisms.
#[allow(clippy::large_enum_variant)]
pub enum Input {
    Measures(Vec<AtomicMeasure>),
    Polys(Poly, Option<Poly>),
}

pub fn run(suite: Suite, input: Input, settings: &Settings) -> Result<Vec<Check>, Failure> {
    match (suite, input) {
        (Suite::Semiring, Input::Measures(pool)) => Ok(semiring(&pool, settings)),
        (Suite::Semiring, Input::Polys(p, q)) => {
            let mut pool: Vec<AtomicMeasure> = p.measures().into_iter().cloned().collect();
            if let Some(q) = &q {
                pool.extend(q.measures().into_iter().cloned());
            }
            Ok(semiring(&pool, settings))
        }
        (_, Input::Measures(_)) => Err(Failure::schema(format!("suite {suite:?} needs a polymorphism"))),
        (Suite::Assoc, Input::Polys(p, q)) => assoc(p, q, settings),
        (Suite::Functorial, Input::Polys(p, q)) => {
            let (p, q) = bordered_pair(p, q);
            functorial(&p, &q, settings)
        }
        (Suite::Mellin, Input::Polys(p, q)) => {
            let q = q.unwrap_or_else(|| p.identity(true));
            match Poly::unify(p, q) {
                (Poly::R(p), Poly::R(q)) => rstar_mellin(&p, &q, settings),
                (Poly::V(p), Poly::V(q)) => shadow_mellin(&p, &q, settings),
                _ => unreachable!("unified"),
            }
        }
        (Suite::Degeneration, Input::Polys(p, q)) => {
            let (p, q) = bordered_pair(p, q);
            degeneration(&p, &q, settings)
        }
    }
}

fn bordered_pair(p: Poly, q: Option<Poly>) -> (VPolymorphism, VPolymorphism) {
    let q = q.unwrap_or_else(|| p.identity(true));
    (p.to_bordered(), q.to_bordered())
}

const POOL_LIMIT: usize = 8;

fn semiring(pool: &[AtomicMeasure], settings: &Settings) -> Vec<Check> {
    let mut pool: Vec<AtomicMeasure> = pool.iter().filter(|m| !m.is_zero()).take(POOL_LIMIT).cloned().collect();
    pool.push(AtomicMeasure::unit());
    let conv = |a: &AtomicMeasure, b: &AtomicMeasure| a.convolve(b).expect("small pool");
    let (mut comm, mut assoc, mut dist, mut unit, mut mellin) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for u in &pool {
        unit = unit.max(conv(u, &AtomicMeasure::unit()).distance(u));
        for v in &pool {
            let uv = conv(u, v);
            comm = comm.max(uv.distance(&conv(v, u)));
            for &s in settings.mellin_grid.points() {
                let scale = absolute_mellin(u, s) * absolute_mellin(v, s);
                if scale > 0.0 {
                    mellin = mellin.max((uv.mellin(s) - u.mellin(s) * v.mellin(s)).norm() / scale);
                }
            }
            for w in &pool {
                assoc = assoc.max(conv(&uv, w).distance(&conv(u, &conv(v, w))));
                dist = dist.max(conv(u, &v.add(w)).distance(&uv.add(&conv(u, w))));
            }
        }
    }
    let tol = settings.tol;
    vec![
        Check::at_most("commutativity", comm, tol),
        Check::at_most("associativity", assoc, tol),
        Check::at_most("distributivity", dist, tol),
        Check::at_most("unit", unit, tol),
        Check::at_most("mellin_relative_error", mellin, tol),
    ]
}

/// `Σ w·x^{Re s}`, a bound on `|M(u, s)|`.
fn absolute_mellin(u: &AtomicMeasure, s: Complex64) -> f64 {
    u.atoms().iter().map(|a| a.mass * a.position.powf(s.re)).sum()
}

fn assoc(p: Poly, q: Option<Poly>, settings: &Settings) -> Result<Vec<Check>, Failure> {
    let tol = settings.tol;
    let q = q.unwrap_or_else(|| p.spreading_on_target().expect("target matches itself"));
    let (p, q) = Poly::unify(p, q);
    let r = q.spreading_on_target()?;
    let qp = q.after(&p)?;
    let left = r.after(&qp)?;
    let right = r.after(&q)?.after(&p)?;
    let residual = [&p, &q, &qp, &left]
        .iter()
        .map(|x| x.validate(tol).max_residual())
        .fold(0.0, f64::max);
    let left_unit = p.identity(true).after(&p)?.distance(&p)?;
    let right_unit = p.after(&p.identity(false))?.distance(&p)?;
    Ok(vec![
        Check::at_most("marginal_residual", residual, tol),
        Check::at_most("associativity", left.distance(&right)?, tol),
        Check::at_most("left_identity", left_unit, tol),
        Check::at_most("right_identity", right_unit, tol),
    ])
}

fn functorial(p: &VPolymorphism, q: &VPolymorphism, settings: &Settings) -> Result<Vec<Check>, Failure> {
    let policy = &settings.policy;
    let src = enumerate_configs(p.source(), policy)?;
    let tgt = enumerate_configs(q.target(), policy)?;
    let report = functoriality(p, q, policy, src, tgt)?;
    Ok(vec![
        Check::at_most("distance_over_budget", report.max_ratio, 1.0),
        Check::at_most(
            "marginal_residual",
            p.validate(settings.tol)
                .max_residual()
                .max(q.validate(settings.tol).max_residual()),
            settings.tol,
        ),
    ])
}

fn strip_points(settings: &Settings) -> Vec<Complex64> {
    settings
        .mellin_grid
        .points()
        .iter()
        .copied()
        .filter(|s| (0.0..=1.0).contains(&s.re))
        .collect()
}

fn rstar_mellin(
    p: &spreadmaps::RStarPolymorphism,
    q: &spreadmaps::RStarPolymorphism,
    settings: &Settings,
) -> Result<Vec<Check>, Failure> {
    let r = compose(q, p)?;
    let mut worst = 0.0f64;
    for s in strip_points(settings) {
        let want = weighted_matmul(&t_operator(p, s)?, p.target().masses(), &t_operator(q, s)?);
        let got = t_operator(&r, s)?;
        for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
            worst = worst.max((a - b).norm() / (1.0 + b.norm()));
        }
    }
    Ok(vec![Check::at_most("t_operator_multiplicativity", worst, settings.tol)])
}

/// Total multiplicity of compared configurations in the shadow checks.
const SHADOW_CONFIG_TOTAL: u32 = 3;

fn small_configs(n: usize) -> Vec<Configuration> {
    configs_up_to(n, SHADOW_CONFIG_TOTAL)
        .into_iter()
        .filter(|c| c.size() <= SHADOW_CONFIG_TOTAL)
        .collect()
}

fn shadow_mellin(p: &VPolymorphism, q: &VPolymorphism, settings: &Settings) -> Result<Vec<Check>, Failure> {
    let r = compose_v(q, p)?;
    let (src, tgt) = (small_configs(p.source().len()), small_configs(q.target().len()));
    let (mut law, mut calibration) = (0.0f64, 0.0f64);
    for s in strip_points(settings) {
        let composed = compose_shadows(&shadow_of_v(q, s)?, &shadow_of_v(p, s)?, p.target())?;
        let direct = shadow_of_v(&r, s)?;
        for phi in &src {
            for psi in &tgt {
                let (a, b) = (composed.element(phi, psi)?, direct.element(phi, psi)?);
                law = law.max((a - b).norm() / (1.0 + b.norm()));
            }
        }
        let sp = shadow_of_v(p, s)?;
        for phi in &small_configs(p.source().len()) {
            for psi in &small_configs(p.target().len()) {
                let w = omega_entry_collapsed(p, phi, psi, &settings.policy)?;
                let (a, b) = (sp.element(phi, psi)?, w.mellin(s));
                calibration = calibration.max((a - b).norm() / (1.0 + b.norm()));
            }
        }
    }
    let tol = settings.tol;
    Ok(vec![
        Check::at_most("shadow_composition", law, tol),
        Check::at_most(
            "shadow_vs_omega",
            calibration,
            tol.max(10.0 * settings.policy.series_tail),
        ),
    ])
}

const EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Residuals below this are rounding and carry no slope information.
const NOISE_FLOOR: f64 = 1e-12;
const MIN_SLOPE: f64 = 0.9;

fn degeneration(p: &VPolymorphism, q: &VPolymorphism, settings: &Settings) -> Result<Vec<Check>, Failure> {
    let mut slope = f64::INFINITY;
    let mut last = 0.0f64;
    for &s in settings.mellin_grid.points() {
        let res = EPSILONS
            .iter()
            .map(|&e| Ok(eps_degeneration_check(p, q, s, e, None)?.residual))
            .collect::<Result<Vec<f64>, Failure>>()?;
        for k in 0..EPSILONS.len() - 1 {
            if res[k + 1] > NOISE_FLOOR {
                slope = slope.min((res[k] / res[k + 1]).ln() / (EPSILONS[k] / EPSILONS[k + 1]).ln());
            }
        }
        last = last.max(res[EPSILONS.len() - 1]);
    }
    Ok(vec![
        Check::at_least("min_log_log_slope", slope, MIN_SLOPE),
        Check::at_most(
            "residual_at_smallest_epsilon",
            last,
            10.0 * EPSILONS[EPSILONS.len() - 1],
        ),
    ])
}
