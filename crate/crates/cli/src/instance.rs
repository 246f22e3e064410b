use std::path::Path;

use serde::Serialize;
use spreadmaps::bordered::{coarsen_v, compose_v};
use spreadmaps::rstar::{coarsen, compose, ValidationReport};
use spreadmaps::{
    AtomicMeasure, InstanceFile, MellinGrid, Partition, Payload, RStarPolymorphism, TruncationPolicy, VPolymorphism,
};

use crate::failure::Failure;

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub cap: Option<u32>,
    pub tail: Option<f64>,
    pub series_tail: Option<f64>,
    pub mellin_grid: Option<MellinGrid>,
}

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub tol: f64,
    pub policy: TruncationPolicy,
    pub mellin_grid: MellinGrid,
}

/// Effective settings of a run, with the built-in defaults alongside.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub tol: f64,
    pub policy: TruncationPolicy,
    pub mellin_grid: MellinGrid,
    pub defaults: Defaults,
}

impl Overrides {
    /// Flags win over the policy stored in the instance file.
    pub fn settings(&self, file_policy: &TruncationPolicy) -> Result<Settings, Failure> {
        let policy = TruncationPolicy {
            max_multiplicity: self.cap.unwrap_or(file_policy.max_multiplicity),
            tail_mass: self.tail.unwrap_or(file_policy.tail_mass),
            series_tail: self.series_tail.unwrap_or(file_policy.series_tail),
        };
        policy.check()?;
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if !(tol >= 0.0) || !tol.is_finite() {
            return Err(Failure::new(
                "config",
                crate::failure::EXIT_GENERAL,
                format!("bad --tol {tol}"),
            ));
        }
        Ok(Settings {
            tol,
            policy,
            mellin_grid: self.mellin_grid.clone().unwrap_or_default(),
            defaults: Defaults {
                tol: DEFAULT_TOL,
                policy: TruncationPolicy::default(),
                mellin_grid: MellinGrid::default(),
            },
        })
    }
}

pub fn load(path: &Path) -> Result<InstanceFile, Failure> {
    Ok(InstanceFile::read(path)?)
}

/// A polymorphism of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Poly {
    R(RStarPolymorphism),
    V(VPolymorphism),
}

impl Poly {
    pub fn from_payload(payload: Payload, path: &Path) -> Result<Poly, Failure> {
        match payload {
            Payload::Rstar(r) => Ok(Poly::R(r)),
            Payload::Bordered(v) => Ok(Poly::V(v)),
            Payload::Measure(_) => Err(Failure::schema(format!(
                "{}: expected a polymorphism, found a measure",
                path.display()
            ))),
        }
    }

    pub fn into_payload(self) -> Payload {
        match self {
            Poly::R(r) => Payload::Rstar(r),
            Poly::V(v) => Payload::Bordered(v),
        }
    }

    pub fn to_bordered(&self) -> VPolymorphism {
        match self {
            Poly::R(r) => VPolymorphism::from_rstar(r),
            Poly::V(v) => v.clone(),
        }
    }

    /// Both factors as the same kind; an ℝ*-polymorphism embeds as a bordered
    /// one with empty border blocks.
    pub fn unify(a: Poly, b: Poly) -> (Poly, Poly) {
        match (a, b) {
            (Poly::R(x), Poly::V(y)) => (Poly::V(VPolymorphism::from_rstar(&x)), Poly::V(y)),
            (Poly::V(x), Poly::R(y)) => (Poly::V(x), Poly::V(VPolymorphism::from_rstar(&y))),
            pair => pair,
        }
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        match self {
            Poly::R(r) => r.validate(tol),
            Poly::V(v) => v.validate(tol),
        }
    }

    /// `self ∘ first`
    pub fn after(&self, first: &Poly) -> Result<Poly, Failure> {
        Ok(match Poly::unify(first.clone(), self.clone()) {
            (Poly::R(p), Poly::R(q)) => Poly::R(compose(&q, &p)?),
            (Poly::V(p), Poly::V(q)) => Poly::V(compose_v(&q, &p)?),
            _ => unreachable!("unified"),
        })
    }

    pub fn coarsen(&self, source: &Partition, target: &Partition) -> Result<Poly, Failure> {
        Ok(match self {
            Poly::R(r) => Poly::R(coarsen(r, source, target)?),
            Poly::V(v) => Poly::V(coarsen_v(v, source, target)?),
        })
    }

    pub fn distance(&self, other: &Poly) -> Result<f64, Failure> {
        Ok(match Poly::unify(self.clone(), other.clone()) {
            (Poly::R(a), Poly::R(b)) => a.distance(&b)?,
            (Poly::V(a), Poly::V(b)) => a.distance(&b)?,
            _ => unreachable!("unified"),
        })
    }

    pub fn source_len(&self) -> usize {
        match self {
            Poly::R(r) => r.source().len(),
            Poly::V(v) => v.source().len(),
        }
    }

    pub fn target_len(&self) -> usize {
        match self {
            Poly::R(r) => r.target().len(),
            Poly::V(v) => v.target().len(),
        }
    }

    /// Identity on the source (`target = false`) or target space.
    pub fn identity(&self, target: bool) -> Poly {
        match self {
            Poly::R(r) => Poly::R(RStarPolymorphism::identity(if target {
                r.target()
            } else {
                r.source()
            })),
            Poly::V(v) => Poly::V(VPolymorphism::identity(if target { v.target() } else { v.source() })),
        }
    }

    /// Uniform spreading of the target space onto itself.
    pub fn spreading_on_target(&self) -> Result<Poly, Failure> {
        Ok(match self {
            Poly::R(r) => Poly::R(RStarPolymorphism::uniform_spreading(r.target(), r.target())?),
            Poly::V(v) => {
                let fin = v.target().finite();
                Poly::V(VPolymorphism::from_rstar(&RStarPolymorphism::uniform_spreading(
                    fin, fin,
                )?))
            }
        })
    }

    pub fn measures(&self) -> Vec<&AtomicMeasure> {
        match self {
            Poly::R(r) => r.entries().iter().flatten().collect(),
            Poly::V(v) => v.blocks().collect(),
        }
    }
}
