//! Pinned experiment configurations behind each reproduced exhibit.

use std::fmt;
use std::str::FromStr;

use crate::config::{ExperimentConfig, InferenceSection, PenalizedSection, SmoothingSection};
use crate::error::CliError;

/// Seed shared by every pinned configuration.
pub const REPRODUCE_SEED: u64 = 20_190_801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Table1,
    Table2,
    Table3,
    Fig2,
    Fig3,
    AppendixE,
}

impl Target {
    pub fn all() -> [Target; 6] {
        [
            Target::Table1,
            Target::Table2,
            Target::Table3,
            Target::Fig2,
            Target::Fig3,
            Target::AppendixE,
        ]
    }

    /// Whether the exhibit reports confidence sets rather than estimation error.
    pub fn is_inference(self) -> bool {
        matches!(self, Target::Fig2 | Target::AppendixE)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Table1 => "table1",
            Target::Table2 => "table2",
            Target::Table3 => "table3",
            Target::Fig2 => "fig2",
            Target::Fig3 => "fig3",
            Target::AppendixE => "appendixE",
        })
    }
}

impl FromStr for Target {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::all()
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| CliError::Config(format!("unknown reproduce target '{s}'")))
    }
}

/// One labelled run inside an exhibit.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedRun {
    pub label: String,
    pub config: ExperimentConfig,
}

fn base(kind: &str, p: usize, n: usize, m: usize, tau: f64, nu: f64, trials: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::example();
    cfg.trials = trials;
    cfg.seed = REPRODUCE_SEED;
    cfg.dgp.kind = kind.into();
    cfg.dgp.p = p;
    cfg.dgp.n = n;
    cfg.dgp.m = m;
    cfg.dgp.tau = tau;
    cfg.dgp.nu = nu;
    cfg
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Pinned runs for `target`. Reduced runs use fewer trials and a subset of
/// the sweep; `full` restores the published trial counts and sweeps.
pub fn pinned_runs(target: Target, full: bool) -> Vec<PinnedRun> {
    let pick = |reduced: u64, published: u64| if full { published } else { reduced };
    match target {
        Target::Table1 => {
            let ms: &[usize] = if full { &[50, 100, 200, 400, 600, 1000] } else { &[50, 200, 1000] };
            ms.iter()
                .map(|&m| {
                    let mut cfg = base("linear_hetero(0.2)", 10, 300, m, 0.8, 2.0, pick(20, 100));
                    cfg.estimators = strings(&["global", "distributed:1", "distributed:10", "dc", "subgradient:10"]);
                    PinnedRun {
                        label: format!("m{m}"),
                        config: cfg,
                    }
                })
                .collect()
        }
        Target::Table2 => {
            let ns: &[usize] = if full { &[300, 500, 1000, 1500, 3000, 6000] } else { &[500, 3000] };
            ns.iter()
                .map(|&n| {
                    let mut cfg = base("linear_hetero(0.2)", 10, n, 150_000 / n, 0.8, 2.0, pick(10, 100));
                    cfg.estimators = strings(&["global", "dc", "distributed:4", "distributed:10", "subgradient:10"]);
                    PinnedRun {
                        label: format!("n{n}"),
                        config: cfg,
                    }
                })
                .collect()
        }
        Target::Table3 => {
            let inits: &[usize] = if full { &[150, 300, 500, 1000, 5000] } else { &[150, 1000] };
            inits
                .iter()
                .map(|&rows| {
                    let mut cfg = base("linear_hetero(0.2)", 10, 300, 400, 0.8, 2.0, pick(10, 100));
                    cfg.estimators = strings(&["distributed:1", "distributed:10"]);
                    cfg.init = format!("fresh:{rows}");
                    PinnedRun {
                        label: format!("init{rows}"),
                        config: cfg,
                    }
                })
                .collect()
        }
        Target::Fig2 => {
            let ms: &[usize] = if full { &[20, 50, 100, 200, 300, 400] } else { &[20, 100] };
            let reps = if full { 1000 } else { 200 };
            ["low_het", "high_het"]
                .iter()
                .flat_map(|kind| {
                    ms.iter().map(move |&m| {
                        let mut cfg = base(kind, 50, 2000, m, 0.4, 1.5, pick(10, 100));
                        cfg.init = "dc".into();
                        cfg.smoothing = SmoothingSection {
                            c: 1.5,
                            ..SmoothingSection::default()
                        };
                        cfg.inference = Some(InferenceSection {
                            alpha: 0.05,
                            methods: vec![
                                "ce_normal:type1".into(),
                                "ce_normal:type2".into(),
                                "dc_normal:type2".into(),
                                format!("ce_boot_a:{reps}"),
                                format!("ce_boot_b:{reps}"),
                            ],
                            coefs: (1..=50).collect(),
                            rounds: 10,
                            score_scan: "full".into(),
                        });
                        PinnedRun {
                            label: format!("{kind}_m{m}"),
                            config: cfg,
                        }
                    })
                })
                .collect()
        }
        Target::Fig3 => {
            let ms: &[usize] = if full { &[20, 40, 60, 80, 100, 120] } else { &[20, 60] };
            ms.iter()
                .map(|&m| {
                    let mut cfg = base("sparse_linear_hetero", 500, 400, m, 0.8, 1.5, pick(5, 100));
                    cfg.estimators = strings(&["penalized:1", "penalized:10", "pooled_l1", "average_l1"]);
                    cfg.penalized = Some(PenalizedSection {
                        sparsity: 5,
                        bandwidth_c: 0.75,
                        validation_rows: 200,
                    });
                    PinnedRun {
                        label: format!("m{m}"),
                        config: cfg,
                    }
                })
                .collect()
        }
        Target::AppendixE => {
            let reps = if full { 1000 } else { 200 };
            let mut cfg = base("two_factor_hetero", 10, 200, 100, 0.9, 1.5, pick(20, 200));
            cfg.init = "dc".into();
            cfg.smoothing = SmoothingSection {
                c: 1.5,
                ..SmoothingSection::default()
            };
            cfg.inference = Some(InferenceSection {
                alpha: 0.05,
                methods: vec![
                    "ce_normal:type2".into(),
                    "dc_normal:type2".into(),
                    "ce_score:201".into(),
                    format!("ce_boot_a:{reps}"),
                    format!("ce_boot_b:{reps}"),
                ],
                coefs: vec![1, 2],
                rounds: 10,
                score_scan: "outward:5".into(),
            });
            vec![PinnedRun {
                label: "n200_m100".into(),
                config: cfg,
            }]
        }
    }
}
