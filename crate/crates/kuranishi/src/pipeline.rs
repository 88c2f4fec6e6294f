//! Staged runs: validate → tame → reduce → perturb → vfc, plus the
//! invariance suite, atlas generation and the degree oracle.
//!
//! Every stage runs its prerequisites. The report records the resolved
//! config and contains no timestamps, so a fixed config replays to the
//! same bytes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::atlas::{atlas_to_doc, AtlasDoc, AtlasSpec};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::generator::{brute_force_degree, generate, load_problem};
use crate::perturb::{build_adapted, verify_adapted, BuildOptions, Evaluator, Perturbation};
use crate::realization::{build_cloud, RealizationCloud};
use crate::refine::{compute_sigma, find_tame_shrinking, reduce, ReductionContext, ReductionDoc, ReductionParams};
use crate::report::{Status, Verdict, Witness};
use crate::validators::{check_cocycle, check_tameness, validate_all, CocycleLevel};
use crate::vfc::{check_orientation, invariance_check, vfc_count, InvarianceOptions, InvarianceReport, OrientedZeroSet};

/// Prefix selecting a generated atlas instead of a fixture or document.
pub const GENERATED_PREFIX: &str = "gen:";

/// Shrinking rounds tried by the tame stage.
pub const TAME_ITERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Tame,
    Reduce,
    Perturb,
    Vfc,
    Invariance,
    Generate,
    Oracle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Fixture name, atlas document path, or `gen:<problem>`; for
    /// `generate` and `oracle` a problem name or document path.
    pub atlas: String,
    pub command: Stage,
    pub density: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub report: Option<String>,
    pub plot: Option<String>,
}

impl PipelineConfig {
    pub fn new(atlas: impl Into<String>, command: Stage) -> Self {
        PipelineConfig {
            atlas: atlas.into(),
            command,
            density: 12,
            seed: 1,
            tolerances: Tolerances::default(),
            delta: None,
            sigma: None,
            report: None,
            plot: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub verdicts: Vec<Verdict>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VfcReport {
    pub count: i64,
    pub classes: Vec<crate::vfc::SignedClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub config: PipelineConfig,
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atlas: Option<AtlasDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vfc: Option<VfcReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<i64>,
    pub passed: bool,
    pub first_failure: Option<String>,
    /// Names of every check that did not pass.
    pub failed_checks: Vec<String>,
}

impl Report {
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.stages.iter().flat_map(|s| &s.verdicts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Data-only plot output: rows of coordinates and values.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PlotData {
    /// `(class, chart, coordinates, sign)`.
    pub zeros: Vec<(usize, String, Vec<f64>, i32)>,
    /// `(chart, set, lo, hi)` for the boxes of `V` and `C`.
    pub boxes: Vec<(String, String, Vec<f64>, Vec<f64>)>,
    /// `(chart, point, |ν|)` on the level lattice.
    pub nu: Vec<(String, Vec<f64>, f64)>,
}

pub fn load_atlas(spec: &str, tol: &Tolerances) -> Result<AtlasSpec> {
    match spec.strip_prefix(GENERATED_PREFIX) {
        Some(name) => {
            let (problem, plan) = load_problem(name)?;
            generate(&problem, &plan, tol)
        }
        None => crate::fixtures::load(spec),
    }
}

fn error_verdict(stage: Stage, e: &Error) -> Verdict {
    Verdict::fail(stage.to_string(), f64::NAN, 0.0, Witness::new(vec![], vec![], f64::NAN, e.to_string()))
}

struct Run {
    cfg: PipelineConfig,
    report: Report,
    plot: PlotData,
}

impl Run {
    fn push(&mut self, stage: Stage, verdicts: Vec<Verdict>) -> bool {
        let ok = verdicts.iter().all(Verdict::passed);
        self.report.stages.push(StageReport { stage, verdicts });
        ok
    }

    fn fail(&mut self, stage: Stage, e: Error) -> bool {
        self.push(stage, vec![error_verdict(stage, &e)])
    }

    fn tol(&self) -> Tolerances {
        self.cfg.tolerances
    }

    fn validate(&mut self, atlas: &AtlasSpec) -> Option<RealizationCloud> {
        let tol = self.tol();
        let cloud = match build_cloud(atlas, self.cfg.density, self.cfg.seed, tol.tau_id) {
            Ok(c) => c,
            Err(e) => {
                self.fail(Stage::Validate, e);
                return None;
            }
        };
        let v = validate_all(atlas, Some(&cloud), self.cfg.density, self.cfg.seed, &tol);
        self.push(Stage::Validate, v).then_some(cloud)
    }

    fn tame(&mut self, atlas: &AtlasSpec) -> Option<AtlasSpec> {
        let tol = self.tol();
        let (d, s) = (self.cfg.density, self.cfg.seed);
        match find_tame_shrinking(atlas, TAME_ITERS, false, d, s, &tol) {
            Ok(t) => {
                // fresh samples for the confirmation
                let s2 = s.wrapping_add(0x7a3e);
                let v = vec![check_tameness(&t, d, s2, &tol), check_cocycle(&t, CocycleLevel::Strong, d, s2, &tol)];
                self.push(Stage::Tame, v).then_some(t)
            }
            Err(e) => {
                self.fail(Stage::Tame, e);
                None
            }
        }
    }

    fn reduce(&mut self, tamed: &AtlasSpec) -> Option<(RealizationCloud, ReductionContext)> {
        let tol = self.tol();
        let r = build_cloud(tamed, self.cfg.density, self.cfg.seed, tol.tau_id).and_then(|cloud| {
            let mut ctx = reduce(tamed, &cloud, &ReductionParams::default())?;
            if let Some(d) = self.cfg.delta {
                ctx.delta = d;
            }
            match self.cfg.sigma {
                Some(s) => ctx.sigma = s,
                None if self.cfg.delta.is_some() => ctx.sigma = compute_sigma(tamed, &ctx)?.bound,
                None => {}
            }
            Ok((cloud, ctx))
        });
        match r {
            Ok((cloud, ctx)) => {
                let mut v = Verdict::pass("reduction constants", ctx.sigma.min(ctx.delta), 0.0).with_note("min(σ, δ)");
                if !(ctx.sigma > 0.0 && ctx.delta > 0.0) {
                    v.push_failure(Witness::new(vec![], vec![], ctx.sigma.min(ctx.delta), "nonpositive σ or δ"));
                }
                self.report.reduction = Some(ctx.to_doc());
                for i in tamed.index_sets() {
                    for (name, set) in [("V", &ctx.v[&i]), ("C", &ctx.c[&i])] {
                        for p in set.pieces() {
                            self.plot.boxes.push((crate::atlas::fmt_index(&i), name.into(), p.lo_f64(), p.hi_f64()));
                        }
                    }
                }
                self.push(Stage::Reduce, vec![v]).then_some((cloud, ctx))
            }
            Err(e) => {
                self.fail(Stage::Reduce, e);
                None
            }
        }
    }

    fn perturb(&mut self, tamed: &AtlasSpec, ctx: &ReductionContext) -> Option<Perturbation> {
        let tol = self.tol();
        let seed = self.cfg.seed;
        let r = build_adapted(tamed, ctx, seed, &tol, &BuildOptions::default())
            .and_then(|p| verify_adapted(tamed, ctx, &p, seed.wrapping_add(0xf7e5), &tol).map(|rep| (p, rep)));
        match r {
            Ok((p, rep)) => {
                self.report.perturbation = Some(p.clone());
                if let Ok(ev) = Evaluator::load(tamed, ctx, &p) {
                    let h = 1.0 / self.cfg.density.max(1) as f64;
                    for i in tamed.index_sets() {
                        let k = i.len() as f64;
                        for y in ev.geom.level_lattice(&i, k, h) {
                            let n = ev.norm_of(&i, &ev.nu(&i, &y));
                            self.plot.nu.push((crate::atlas::fmt_index(&i), y, n));
                        }
                    }
                }
                self.push(Stage::Perturb, rep.verdicts).then_some(p)
            }
            Err(e) => {
                self.fail(Stage::Perturb, e);
                None
            }
        }
    }

    fn count(&mut self, tamed: &AtlasSpec, ctx: &ReductionContext, p: &Perturbation) -> Option<OrientedZeroSet> {
        let tol = self.tol();
        let o = check_orientation(tamed, self.cfg.density, self.cfg.seed, &tol);
        if !o.passed() {
            self.push(Stage::Vfc, vec![o]);
            return None;
        }
        match vfc_count(tamed, ctx, p, &tol) {
            Ok(z) => {
                for (k, c) in z.classes.iter().enumerate() {
                    for m in &c.members {
                        self.plot.zeros.push((k, crate::atlas::fmt_index(&m.chart), m.point.clone(), m.sign));
                    }
                }
                let margin = z.classes.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
                let v = Verdict::pass("zero count", margin, tol.tau_transv).with_note("min σ_min over classes");
                self.report.vfc = Some(VfcReport { count: z.count, classes: z.classes.clone(), invariance: None });
                self.push(Stage::Vfc, vec![o, v]).then_some(z)
            }
            Err(e) => {
                self.push(Stage::Vfc, vec![o]);
                self.fail(Stage::Vfc, e);
                None
            }
        }
    }

    /// Runs validate through vfc, stopping after `last`.
    fn staged(&mut self, atlas: &AtlasSpec, last: Stage) -> Option<(AtlasSpec, RealizationCloud)> {
        self.validate(atlas)?;
        if last == Stage::Validate {
            return None;
        }
        let tamed = self.tame(atlas)?;
        self.report.atlas = Some(atlas_to_doc(&tamed));
        if last == Stage::Tame {
            return None;
        }
        let (cloud, ctx) = self.reduce(&tamed)?;
        if last == Stage::Reduce {
            return None;
        }
        let p = self.perturb(&tamed, &ctx)?;
        if last == Stage::Perturb {
            return None;
        }
        self.count(&tamed, &ctx, &p)?;
        Some((tamed, cloud))
    }

    fn invariance(&mut self, tamed: &AtlasSpec, cloud: &RealizationCloud) {
        let opts = InvarianceOptions { seeds: (0..3).map(|k| self.cfg.seed.wrapping_add(k)).collect(), ..Default::default() };
        match invariance_check(tamed, cloud, &opts, &self.tol()) {
            Ok(rep) => {
                let v = rep.verdict.clone();
                if let Some(vfc) = self.report.vfc.as_mut() {
                    vfc.invariance = Some(rep);
                }
                self.push(Stage::Invariance, vec![v]);
            }
            Err(e) => {
                self.fail(Stage::Invariance, e);
            }
        }
    }
}

/// Executes the configured stage and its prerequisites.
pub fn run(cfg: &PipelineConfig) -> (Report, PlotData) {
    let mut r = Run {
        cfg: cfg.clone(),
        report: Report {
            config: cfg.clone(),
            stages: Vec::new(),
            atlas: None,
            reduction: None,
            perturbation: None,
            vfc: None,
            degree: None,
            passed: false,
            first_failure: None,
            failed_checks: Vec::new(),
        },
        plot: PlotData::default(),
    };
    let tol = cfg.tolerances;
    match cfg.command {
        Stage::Generate | Stage::Oracle => match load_problem(&cfg.atlas) {
            Err(e) => {
                r.fail(cfg.command, e);
            }
            Ok((problem, plan)) => {
                if cfg.command == Stage::Oracle {
                    match brute_force_degree(&problem) {
                        Ok(d) => {
                            r.report.degree = Some(d);
                            r.push(Stage::Oracle, vec![Verdict::pass("degree oracle", d as f64, 0.0)]);
                        }
                        Err(e) => {
                            r.fail(Stage::Oracle, e);
                        }
                    }
                }
                match generate(&problem, &plan, &tol) {
                    Ok(a) => {
                        r.report.atlas = Some(atlas_to_doc(&a));
                        if cfg.command == Stage::Generate {
                            r.validate(&a);
                        } else if r.staged(&a, Stage::Vfc).is_some() {
                            let (c, d) = (r.report.vfc.as_ref().map(|v| v.count), r.report.degree);
                            let mut v = Verdict::pass("count equals degree", 0.0, 0.0);
                            if c != d {
                                v.push_failure(Witness::new(vec![], vec![], 1.0, format!("count {c:?} vs degree {d:?}")));
                            }
                            r.push(Stage::Oracle, vec![v]);
                        }
                    }
                    Err(e) => {
                        r.fail(Stage::Generate, e);
                    }
                }
            }
        },
        stage => match load_atlas(&cfg.atlas, &tol) {
            Err(e) => {
                r.fail(Stage::Validate, e);
            }
            Ok(a) => {
                let last = if stage == Stage::Invariance { Stage::Vfc } else { stage };
                if let Some((tamed, cloud)) = r.staged(&a, last) {
                    if stage == Stage::Invariance {
                        r.invariance(&tamed, &cloud);
                    }
                }
            }
        },
    }
    let report = &mut r.report;
    let first = report.verdicts().find(|v| v.status != Status::Pass).map(|v| v.to_string());
    report.first_failure = first;
    report.failed_checks = report.verdicts().filter(|v| v.status != Status::Pass).map(|v| v.check.clone()).collect();
    report.passed = !report.stages.is_empty() && report.first_failure.is_none();
    (r.report, r.plot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names() {
        assert_eq!(Stage::Invariance.to_string(), "invariance");
        assert_eq!(serde_json::from_str::<Stage>("\"vfc\"").unwrap(), Stage::Vfc);
    }

    #[test]
    fn planar_generated_vfc_is_two() {
        let (r, plot) = run(&PipelineConfig::new("gen:planar", Stage::Vfc));
        assert!(r.passed, "{:?}", r.first_failure);
        assert_eq!(r.vfc.as_ref().unwrap().count, 2);
        assert_eq!(plot.zeros.len(), 2);
        let names: Vec<Stage> = r.stages.iter().map(|s| s.stage).collect();
        assert_eq!(names, [Stage::Validate, Stage::Tame, Stage::Reduce, Stage::Perturb, Stage::Vfc]);
    }

    #[test]
    fn nonlin_validation_names_injectivity() {
        let (r, _) = run(&PipelineConfig::new("ex-nonlin", Stage::Vfc));
        assert!(!r.passed);
        assert_eq!(r.stages.len(), 1);
        assert!(r.first_failure.unwrap().starts_with("additivity"));
        assert!(r.failed_checks.iter().any(|c| c == "injectivity-hausdorff"));
    }

    #[test]
    fn replay_is_byte_identical() {
        let cfg = PipelineConfig::new("ex-change", Stage::Vfc);
        let a = run(&cfg).0.to_json();
        let b = run(&cfg).0.to_json();
        assert_eq!(a, b);
        let back: Report = serde_json::from_str(&a).unwrap();
        assert_eq!(back.config, cfg);
    }

    #[test]
    fn oracle_stage_compares() {
        let (r, _) = run(&PipelineConfig::new("cubic", Stage::Oracle));
        assert!(r.passed, "{:?}", r.first_failure);
        assert_eq!(r.degree, Some(1));
    }
}
