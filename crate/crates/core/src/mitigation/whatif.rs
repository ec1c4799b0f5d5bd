use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::family::Layout;
use crate::analysis::{count_rss, knowledge_complexity, FamilyBase, Method, Pin, RemapFamily, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::logic::{build_beta_star, parse_task, TaskSpec};
use crate::mitigation::transforms::{
    constrain_family, merge_multitask, pin_all, transform_support, FamilyConstraint, SupportMode,
};

pub const WHATIF_SCHEMA_VERSION: u32 = 1;

/// Where a companion task comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSource {
    Inline { text: String },
    File { path: PathBuf },
}

impl TaskSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<TaskSpec> {
        match self {
            TaskSource::Inline { text } => parse_task(text),
            TaskSource::File { path } => {
                let full = match base_dir {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path.clone(),
                };
                parse_task(&std::fs::read_to_string(full)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MitigationSpec {
    MultiTask {
        tasks: Vec<TaskSource>,
    },
    Support {
        mode: SupportMode,
        vectors: Vec<Vec<u32>>,
    },
    PinSupervision {
        #[serde(default)]
        pins: Vec<Pin>,
        /// Pin every support vector.
        #[serde(default)]
        all: bool,
    },
    RequireInjectivity,
    Factorize {
        shape: FamilyBase,
    },
    EntropyReg {
        weight: f64,
    },
    SmoothTemperature {
        tau: f64,
    },
    ContrastivePairs {
        weight: f64,
    },
    ReconstructionHead {
        weight: f64,
    },
}

impl MitigationSpec {
    pub fn name(&self) -> String {
        match self {
            MitigationSpec::MultiTask { tasks } => format!("multi_task({})", tasks.len()),
            MitigationSpec::Support { mode, vectors } => {
                let m = match mode {
                    SupportMode::Set => "set",
                    SupportMode::Add => "add",
                    SupportMode::Remove => "remove",
                };
                format!("support_{m}({})", vectors.len())
            }
            MitigationSpec::PinSupervision { pins, all } => {
                if *all {
                    "pin_all".into()
                } else {
                    format!("pin({})", pins.len())
                }
            }
            MitigationSpec::RequireInjectivity => "injective".into(),
            MitigationSpec::Factorize { shape } => format!("factorize_{}", shape.name()),
            MitigationSpec::EntropyReg { .. } => "entropy".into(),
            MitigationSpec::SmoothTemperature { .. } => "smoothing".into(),
            MitigationSpec::ContrastivePairs { .. } => "contrastive".into(),
            MitigationSpec::ReconstructionHead { .. } => "reconstruction".into(),
        }
    }

    /// The root cause the strategy acts on.
    pub fn lever(&self) -> &'static str {
        match self {
            MitigationSpec::MultiTask { .. } => "knowledge",
            MitigationSpec::Support { .. } => "support",
            MitigationSpec::Factorize { .. } => "architecture",
            _ => "objective",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} must be finite and valid, got {v}")));
        match self {
            MitigationSpec::EntropyReg { weight }
            | MitigationSpec::ContrastivePairs { weight }
            | MitigationSpec::ReconstructionHead { weight } => {
                if !(weight.is_finite() && *weight >= 0.0) {
                    return bad("weight", *weight);
                }
            }
            MitigationSpec::SmoothTemperature { tau } => {
                if !(tau.is_finite() && *tau >= 1.0) {
                    return bad("tau (>= 1)", *tau);
                }
            }
            MitigationSpec::Factorize { shape: FamilyBase::FullTable } => {
                return Err(Error::InvalidArgument("factorize needs perslot or sharedslot".into()))
            }
            MitigationSpec::MultiTask { tasks } if tasks.is_empty() => {
                return Err(Error::InvalidArgument("multi_task needs at least one companion task".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// The count was recomputed on the transformed task or family.
    Counted,
    /// Counted on the injective family, the symbolic stand-in for a
    /// reconstruction objective.
    CountProxy,
    /// No symbolic effect; measured by training only.
    EmpiricalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub count: u128,
    pub knowledge_complexity: f64,
    /// Raw parameter-space size of the family shape over the support.
    pub family_size: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: String,
    pub lever: String,
    pub effect: Effect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_delta: Option<i128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_complexity_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_size_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationOutcome {
    pub strategies: Vec<String>,
    pub outcome: Outcome,
    pub count_delta: i128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub family: String,
    pub baseline: Outcome,
    pub strategies: Vec<StrategyOutcome>,
    pub combinations: Vec<CombinationOutcome>,
}

#[derive(Clone, Debug)]
pub struct WhatIfOptions {
    pub combos: bool,
    pub budget: u128,
    pub method: Method,
    /// Directory that relative companion-task paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Default for WhatIfOptions {
    fn default() -> Self {
        Self {
            combos: false,
            budget: DEFAULT_BUDGET,
            method: Method::Auto,
            base_dir: None,
        }
    }
}

/// The task and family after applying countable strategies in order;
/// `None` when a strategy has no symbolic effect.
fn apply(
    specs: &[&MitigationSpec],
    task: &TaskSpec,
    family: &RemapFamily,
    opts: &WhatIfOptions,
) -> Result<Option<(TaskSpec, RemapFamily)>> {
    let mut task = task.clone();
    let mut family = family.clone();
    for spec in specs {
        spec.validate()?;
        match spec {
            MitigationSpec::MultiTask { tasks } => {
                let mut all = vec![task.clone()];
                for t in tasks {
                    all.push(t.load(opts.base_dir.as_deref())?);
                }
                task = merge_multitask(&all)?;
            }
            MitigationSpec::Support { mode, vectors } => {
                task = transform_support(&task, vectors, *mode)?;
            }
            MitigationSpec::PinSupervision { pins, all } => {
                let mut pins = pins.clone();
                if *all {
                    pins.extend(pin_all(&task));
                }
                family = constrain_family(&family, &FamilyConstraint::Pin { pins })?;
            }
            MitigationSpec::RequireInjectivity | MitigationSpec::ReconstructionHead { .. } => {
                family = constrain_family(&family, &FamilyConstraint::Injective)?;
            }
            MitigationSpec::Factorize { shape } => {
                family = constrain_family(&family, &FamilyConstraint::Factorize { shape: *shape })?;
            }
            MitigationSpec::EntropyReg { .. }
            | MitigationSpec::SmoothTemperature { .. }
            | MitigationSpec::ContrastivePairs { .. } => return Ok(None),
        }
    }
    // pins on vectors that left the support no longer apply
    family.pins.retain(|p| match p {
        Pin::Vector { g } => {
            task.concepts().contains(g) && task.support().binary_search(&task.concepts().index_of(g)).is_ok()
        }
        Pin::Symbol { .. } => true,
    });
    Ok(Some((task, family)))
}

fn outcome(task: &TaskSpec, family: &RemapFamily, opts: &WhatIfOptions) -> Result<Outcome> {
    let table = build_beta_star(task)?;
    let (count, _) = count_rss(task, &table, family, opts.method, opts.budget)?;
    Ok(Outcome {
        count,
        knowledge_complexity: knowledge_complexity(task, &table, None)?.value,
        family_size: Layout::new(family.base, task)?.candidates().to_string(),
    })
}

fn effect(spec: &MitigationSpec) -> Effect {
    match spec {
        MitigationSpec::EntropyReg { .. }
        | MitigationSpec::SmoothTemperature { .. }
        | MitigationSpec::ContrastivePairs { .. } => Effect::EmpiricalOnly,
        MitigationSpec::ReconstructionHead { .. } => Effect::CountProxy,
        _ => Effect::Counted,
    }
}

pub fn what_if(
    task: &TaskSpec,
    family: &RemapFamily,
    strategies: &[MitigationSpec],
    opts: &WhatIfOptions,
) -> Result<WhatIfReport> {
    for s in strategies {
        s.validate()?;
    }
    let baseline = outcome(task, family, opts)?;
    let base_size: f64 = baseline.family_size.parse().unwrap_or(f64::INFINITY);

    let per: Vec<StrategyOutcome> = strategies
        .par_iter()
        .map(|s| -> Result<StrategyOutcome> {
            let applied = apply(&[s], task, family, opts)?;
            let outcome = match applied {
                Some((t, f)) => Some(outcome(&t, &f, opts)?),
                None => None,
            };
            Ok(StrategyOutcome {
                strategy: s.name(),
                lever: s.lever().into(),
                effect: effect(s),
                count_delta: outcome.as_ref().map(|o| o.count as i128 - baseline.count as i128),
                knowledge_complexity_delta: outcome
                    .as_ref()
                    .map(|o| o.knowledge_complexity - baseline.knowledge_complexity),
                family_size_ratio: outcome
                    .as_ref()
                    .map(|o| o.family_size.parse::<f64>().unwrap_or(f64::INFINITY) / base_size),
                outcome,
            })
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    if opts.combos {
        for i in 0..strategies.len() {
            for j in i + 1..strategies.len() {
                if effect(&strategies[i]) != Effect::EmpiricalOnly && effect(&strategies[j]) != Effect::EmpiricalOnly {
                    pairs.push((i, j));
                }
            }
        }
    }
    let combinations = pairs
        .par_iter()
        .map(|(i, j)| -> Result<CombinationOutcome> {
            let (t, f) = apply(&[&strategies[*i], &strategies[*j]], task, family, opts)?
                .expect("countable strategies");
            let o = outcome(&t, &f, opts)?;
            Ok(CombinationOutcome {
                strategies: vec![strategies[*i].name(), strategies[*j].name()],
                count_delta: o.count as i128 - baseline.count as i128,
                outcome: o,
            })
        })
        .collect::<Result<_>>()?;

    Ok(WhatIfReport {
        schema_version: WHATIF_SCHEMA_VERSION,
        manifest: None,
        family: family.describe(),
        baseline,
        strategies: per,
        combinations,
    })
}

/// One row per strategy: name, lever, effect, count before and after.
pub fn summary_csv(report: &WhatIfReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "lever", "effect", "count_before", "count_after"])?;
    let before = report.baseline.count.to_string();
    w.write_record(["baseline", "", "counted", &before, &before])?;
    for s in &report.strategies {
        let effect = match s.effect {
            Effect::Counted => "counted",
            Effect::CountProxy => "count_proxy",
            Effect::EmpiricalOnly => "empirical_only",
        };
        let after = s.outcome.as_ref().map(|o| o.count.to_string()).unwrap_or_default();
        w.write_record([s.strategy.as_str(), s.lever.as_str(), effect, &before, &after])?;
    }
    for c in &report.combinations {
        let name = c.strategies.join("+");
        w.write_record([name.as_str(), "combined", "counted", &before, &c.outcome.count.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOIA: &str = "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }";

    #[test]
    fn boia_what_if() {
        let task = parse_task(BOIA).unwrap();
        let family = RemapFamily::new(FamilyBase::FullTable);
        let strategies = vec![
            MitigationSpec::RequireInjectivity,
            MitigationSpec::PinSupervision { pins: vec![], all: true },
            MitigationSpec::EntropyReg { weight: 0.5 },
        ];
        let opts = WhatIfOptions { combos: true, ..Default::default() };
        let r = what_if(&task, &family, &strategies, &opts).unwrap();
        assert_eq!(r.baseline.count, 26);
        assert_eq!(r.strategies[0].outcome.as_ref().unwrap().count, 5);
        assert_eq!(r.strategies[1].outcome.as_ref().unwrap().count, 0);
        assert_eq!(r.strategies[2].effect, Effect::EmpiricalOnly);
        assert!(r.strategies[2].outcome.is_none());
        assert_eq!(r.combinations.len(), 1);
        assert_eq!(r.combinations[0].outcome.count, 0);
        let csv = summary_csv(&r).unwrap();
        assert!(csv.starts_with("strategy,lever,effect,count_before,count_after\n"));
        assert!(csv.contains("injective,objective,counted,26,5"));
    }

    #[test]
    fn xor_pin_and_empty_list() {
        let task = parse_task("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }").unwrap();
        let family = RemapFamily::new(FamilyBase::SharedSlot);
        let pin = MitigationSpec::PinSupervision { pins: vec![Pin::Symbol { slot: None, value: 0 }], all: false };
        let r = what_if(&task, &family, &[pin], &WhatIfOptions::default()).unwrap();
        assert_eq!(r.baseline.count, 1);
        assert_eq!(r.strategies[0].outcome.as_ref().unwrap().count, 0);
        let empty = what_if(&task, &family, &[], &WhatIfOptions::default()).unwrap();
        assert!(empty.strategies.is_empty() && empty.combinations.is_empty());
    }

    #[test]
    fn invalid_parameters() {
        assert!(MitigationSpec::SmoothTemperature { tau: 0.5 }.validate().is_err());
        assert!(MitigationSpec::EntropyReg { weight: -1.0 }.validate().is_err());
        let json = r#"[{"strategy":"support","mode":"add","vectors":[[5,5],[5,3]]},{"strategy":"require_injectivity"},
                      {"strategy":"multi_task","tasks":[{"path":"prod.task"},{"text":"concept A : 2;"}]}]"#;
        let specs: Vec<MitigationSpec> = serde_json::from_str(json).unwrap();
        assert_eq!(specs.len(), 3);
    }
}
