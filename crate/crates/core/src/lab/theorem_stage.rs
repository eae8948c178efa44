use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::sqrt_recurrence::{frequency_of, recurrence_scan, SetSpec};
use super::{echo, write_atomic, Check, Context, ExperimentKind, ExperimentReport, Table};
use crate::arith::{self, rat, serde_rat, Rational};
use crate::bohr::{sqrt_set_enumerate, BohrHammingBall, IntSet};
use crate::certificates::{
    build_band_witness, combine_certificates, rotation_certificate, square_certificate, verify_certificate,
    BandBuild, Certificate, DensityTarget, Provenance,
};
use crate::error::{LabError, Result};
use crate::irrational::Surd;
use crate::weyl::FiniteSystem;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrenceSample {
    pub system: FiniteSystem,
    pub set: SetSpec,
    /// Elements of the stage set scanned, from `[1, n_max]`.
    pub n_max: u64,
}

impl Default for RecurrenceSample {
    fn default() -> Self {
        RecurrenceSample {
            system: FiniteSystem::Rotation { q: 101, shift: vec![7] },
            set: SetSpec::Random { density: rat(2, 5) },
            n_max: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremStageParams {
    pub stages: usize,
    /// Density target `eta` of the band witnesses; must be below 1/2.
    #[serde(rename = "deltaPrime", with = "serde_rat")]
    pub delta_prime: Rational,
    /// Free coordinates of the Hamming balls.
    pub k: usize,
    pub r_max: usize,
    /// Certificate horizon.
    pub n: u64,
    pub max_q: u64,
    /// Frequencies per stage; missing stages use square roots of fresh primes.
    pub frequencies: Vec<Vec<Surd>>,
    pub m_max: u64,
    pub target: DensityTarget,
    pub recurrence: Option<RecurrenceSample>,
}

impl Default for TheoremStageParams {
    fn default() -> Self {
        TheoremStageParams {
            stages: 1,
            delta_prime: rat(1, 10),
            k: 1,
            r_max: 64,
            n: 100_000,
            max_q: 1_000_003,
            frequencies: Vec::new(),
            m_max: 40,
            target: DensityTarget::Product,
            recurrence: Some(RecurrenceSample::default()),
        }
    }
}

fn primes() -> impl Iterator<Item = u64> {
    (2u64..).filter(|&n| (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
}

fn stage_frequencies(p: &TheoremStageParams, stage: usize, r: usize) -> Vec<Surd> {
    if let Some(f) = p.frequencies.get(stage) {
        return f.clone();
    }
    primes().skip(stage * r).take(r).map(Surd::sqrt).collect()
}

struct StagePiece {
    roots: IntSet,
    squared: Certificate,
}

/// Band-witness rotation certificate for `BH`, then the certificate for
/// `R^2` where `R = sqrt(BH)`.
fn build_piece(p: &TheoremStageParams, band: &BandBuild, stage: usize, ctx: &Context) -> Result<StagePiece> {
    let r = band.witness.r;
    let beta = stage_frequencies(p, stage, r);
    if beta.len() != r {
        return Err(LabError::InvalidInput(format!(
            "stage {} needs {r} frequencies, got {}",
            stage + 1,
            beta.len()
        )));
    }
    let freq = frequency_of(&beta, p.max_q)?;
    let rot = rotation_certificate(&band.witness, &band.ball, &freq, p.n, ctx.strategy)?;
    let bh = BohrHammingBall::new(freq, band.ball.clone())?;
    let roots = sqrt_set_enumerate(&bh, p.n, ctx.strategy)?.set;
    let small: Vec<i64> = roots
        .elems
        .iter()
        .copied()
        .filter(|&s| (s as u128) * (s as u128) < p.n as u128)
        .collect();
    let base = Certificate::new(p.n, 1, rot.delta.clone(), &small, rot.b.clone(), rot.provenance.clone())?;
    let squared = square_certificate(&base, None, ctx.strategy)?;
    Ok(StagePiece { roots, squared })
}

pub fn exp_theorem_stage(p: &TheoremStageParams, ctx: &Context) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentKind::TheoremStage, echo(ExperimentKind::TheoremStage, p));
    if p.delta_prime >= rat(1, 2) || p.delta_prime <= rat(0, 1) {
        return Err(LabError::Precondition(format!(
            "deltaPrime = {} must lie in (0, 1/2)",
            arith::format_rational(&p.delta_prime)
        )));
    }
    if p.stages > 3 {
        return Err(LabError::InvalidInput(format!("{} stages requested, at most 3 supported", p.stages)));
    }
    if p.stages == 0 {
        report.notes.push("zero stages: nothing to build".into());
        return Ok(report);
    }
    let band = build_band_witness(p.k, &p.delta_prime, p.r_max).map_err(LabError::at_stage("band witness"))?;
    report.metric("band_r", band.witness.r);
    report.metric("band_t", band.witness.t);
    report.metric("band_a", arith::format_rational(&band.witness.a));
    report.metric("band_eps", arith::format_rational(&band.eps));
    report.metric("band_measure", arith::format_rational(&band.measure));
    report.checks.push(Check::holds(
        "band witness: r > 2t + k and 2a + eps <= 1/2",
        true,
        band.conditions.holds,
        format!("{:?}", band.conditions),
    ));

    let sample = match &p.recurrence {
        Some(s) => {
            let sys = match &s.system {
                FiniteSystem::Rotation { q, shift } => FiniteSystem::rotation(*q, shift.clone())?,
                FiniteSystem::Weyl { q, alpha } => FiniteSystem::weyl(*q, alpha.clone())?,
            };
            let a = s.set.build(&sys, ctx.seed)?;
            Some((sys, a, s.n_max))
        }
        None => None,
    };

    let mut table = Table::new(&["stage", "m", "S_count", "S2_count", "B_count", "N", "density", "construction"]);
    let first = build_piece(p, &band, 0, ctx).map_err(LabError::at_stage("stage 1"))?;
    let mut set = first.roots;
    let mut cert = first.squared;
    let mut m_used = 1u64;
    for stage in 0..p.stages {
        if stage > 0 {
            let tag = format!("stage {}", stage + 1);
            let piece = build_piece(p, &band, stage, ctx).map_err(LabError::at_stage(&tag))?;
            let mut failures = Vec::new();
            let mut found = None;
            for m in 1..=p.m_max {
                match combine_certificates(&cert, &piece.squared, m * m, p.target, ctx.strategy) {
                    Ok(c) => {
                        found = Some((m, c));
                        break;
                    }
                    Err(e) => failures.push(format!("m = {m}: {e}")),
                }
            }
            let Some((m, c)) = found else {
                return Err(LabError::Stage {
                    stage: tag,
                    source: Box::new(LabError::Exhausted(failures.join("; "))),
                });
            };
            report.metric(&format!("stage{}_rejected_m", stage + 1), failures.len());
            let mut elems = set.elems.clone();
            elems.extend(piece.roots.elems.iter().map(|&x| x * m as i64).filter(|&x| x as u64 <= p.n));
            set = IntSet::new(p.n, elems);
            cert = c;
            m_used = m;
        }
        let v = verify_certificate(&cert, ctx.strategy);
        let label = format!("stage{}", stage + 1);
        report.checks.push(Check::holds(
            format!("{label}: certificate for S^2 verifies"),
            true,
            v.valid,
            v.to_string(),
        ));
        let density = cert.density();
        report.checks.push(
            Check::at_most(
                format!("{label}: density >= deltaPrime"),
                false,
                arith::to_f64(&p.delta_prime),
                arith::to_f64(&density),
                density >= p.delta_prime,
            )
            .with_detail("the band measure exceeds deltaPrime; finite N and stage products can fall below it"),
        );
        let construction = match &cert.provenance {
            Provenance::Combined { construction, .. } => format!("{construction:?}"),
            Provenance::Square { .. } => "square of rotation".into(),
            _ => "other".into(),
        };
        table.push(vec![
            (stage + 1).to_string(),
            m_used.to_string(),
            set.len().to_string(),
            cert.s.len().to_string(),
            cert.b.count().to_string(),
            cert.n.to_string(),
            arith::format_rational(&density),
            construction,
        ]);
        report.metric(&format!("{label}_density"), density.to_f64().unwrap_or(f64::NAN));
        if let Some(dir) = ctx.output {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{label}.cert"));
            write_atomic(&path, &cert.to_bytes())?;
            report.artifacts.push(path.display().to_string());
        }
        if let Some((sys, a, n_max)) = &sample {
            recurrence_scan(&label, sys, a, &set, *n_max, &mut report, ctx)?;
        }
    }
    report.tables.insert("stages".into(), table);
    report
        .notes
        .push("band witnesses E = { #{i : ||x_i|| >= a} <= t } are this library's construction".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::Outcome;
    use super::*;
    use crate::Strategy;

    fn ctx() -> Context<'static> {
        Context {
            seed: 5,
            strategy: Strategy::Parallel,
            output: None,
        }
    }

    #[test]
    fn one_stage() {
        let p = TheoremStageParams {
            n: 20_000,
            ..Default::default()
        };
        let mut rep = exp_theorem_stage(&p, &ctx()).unwrap();
        rep.settle();
        assert_eq!(rep.outcome, Outcome::Pass, "{:?}", rep.checks);
    }

    #[test]
    fn two_stages() {
        let p = TheoremStageParams {
            n: 20_000,
            stages: 2,
            ..Default::default()
        };
        let mut rep = exp_theorem_stage(&p, &ctx()).unwrap();
        rep.settle();
        assert!(rep.checks.iter().filter(|c| c.exact).all(|c| c.passed), "{:?}", rep.checks);
    }

    #[test]
    fn zero_stages_and_refusal() {
        let p = TheoremStageParams {
            stages: 0,
            ..Default::default()
        };
        let rep = exp_theorem_stage(&p, &ctx()).unwrap();
        assert!(rep.checks.is_empty());
        let p = TheoremStageParams {
            delta_prime: rat(1, 2),
            ..Default::default()
        };
        assert!(matches!(exp_theorem_stage(&p, &ctx()), Err(LabError::Precondition(_))));
    }
}
