//! Experiment configuration: a single JSON document driving the
//! `verify` / `sweep` / `simulate` commands.
//!
//! Parsing is fail-closed: unknown keys anywhere in the document are an
//! error. Method objects are `kind`-tagged, e.g.
//! `{"kind": "cool_exp", "delta": 1.5, "nu": 0.7}`; fields that do not
//! belong to the named kind are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{ArModel, TokenEmbedding};
use crate::rules::{AcceptanceRule, ResamplingRule};
use crate::schedule::Schedule;

/// Embedding dimension used for seeded synthetic embeddings.
pub const EMBED_DIM: usize = 4;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub models: ModelsSpec,
    /// Draft length `L`.
    pub draft_len: usize,
    pub method: Option<MethodSpec>,
    pub resampling: Option<ResamplingSpec>,
    pub n_rounds: Option<u64>,
    pub seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub verify: Option<VerifySpec>,
}

#[derive(Debug, Clone)]
pub enum ModelsSpec {
    Random {
        vocab_size: usize,
        depth: usize,
        concentration: f64,
        seed_p: u64,
        seed_q: u64,
    },
    Inline {
        p: ArModel,
        q: ArModel,
    },
}

impl ModelsSpec {
    pub fn build(&self) -> Result<(ArModel, ArModel)> {
        match self {
            ModelsSpec::Random {
                vocab_size,
                depth,
                concentration,
                seed_p,
                seed_q,
            } => Ok((
                ArModel::random(*vocab_size, *depth, *concentration, *seed_p)?,
                ArModel::random(*vocab_size, *depth, *concentration, *seed_q)?,
            )),
            ModelsSpec::Inline { p, q } => Ok((p.clone(), q.clone())),
        }
    }

    /// Build the pair with the random seeds shifted; inline models are
    /// returned as-is. Used by seed sweeps in the verification suites.
    pub fn build_shifted(&self, shift: u64) -> Result<(ArModel, ArModel)> {
        match self {
            ModelsSpec::Random {
                vocab_size,
                depth,
                concentration,
                seed_p,
                seed_q,
            } => Ok((
                ArModel::random(*vocab_size, *depth, *concentration, seed_p.wrapping_add(shift))?,
                ArModel::random(*vocab_size, *depth, *concentration, seed_q.wrapping_add(shift))?,
            )),
            ModelsSpec::Inline { p, q } => Ok((p.clone(), q.clone())),
        }
    }
}

/// A fully-parameterized decoding method (for `simulate`).
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Vanilla,
    Uniform { delta: f64 },
    CoolExp { delta: f64, nu: f64 },
    CoolLinear { delta: f64, ell: usize },
    Lantern { k: usize, lambda: f64, embed_seed: u64 },
    LanternGstar { k: usize, lambda: f64, embed_seed: u64 },
}

/// A method with the relaxation budget left open (for `sweep`, which
/// supplies `delta` from its grid).
#[derive(Debug, Clone, PartialEq)]
pub enum SweepMethodSpec {
    Vanilla,
    Uniform,
    CoolExp { nu: f64 },
    CoolLinear { ell: usize },
    Lantern { k: usize, lambda: f64, embed_seed: u64 },
    LanternGstar { k: usize, lambda: f64, embed_seed: u64 },
}

impl SweepMethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SweepMethodSpec::Vanilla => "vanilla",
            SweepMethodSpec::Uniform => "uniform",
            SweepMethodSpec::CoolExp { .. } => "cool_exp",
            SweepMethodSpec::CoolLinear { .. } => "cool_linear",
            SweepMethodSpec::Lantern { .. } => "lantern",
            SweepMethodSpec::LanternGstar { .. } => "lantern_gstar",
        }
    }

    /// The auxiliary parameter column: `nu`, `ell`, or `lambda`; empty for
    /// vanilla and uniform.
    pub fn aux(&self) -> String {
        match self {
            SweepMethodSpec::Vanilla | SweepMethodSpec::Uniform => String::new(),
            SweepMethodSpec::CoolExp { nu } => format!("{nu}"),
            SweepMethodSpec::CoolLinear { ell } => format!("{ell}"),
            SweepMethodSpec::Lantern { lambda, .. }
            | SweepMethodSpec::LanternGstar { lambda, .. } => format!("{lambda}"),
        }
    }

    pub fn with_delta(&self, delta: f64) -> MethodSpec {
        match *self {
            SweepMethodSpec::Vanilla => MethodSpec::Vanilla,
            SweepMethodSpec::Uniform => MethodSpec::Uniform { delta },
            SweepMethodSpec::CoolExp { nu } => MethodSpec::CoolExp { delta, nu },
            SweepMethodSpec::CoolLinear { ell } => MethodSpec::CoolLinear { delta, ell },
            SweepMethodSpec::Lantern {
                k,
                lambda,
                embed_seed,
            } => MethodSpec::Lantern {
                k,
                lambda,
                embed_seed,
            },
            SweepMethodSpec::LanternGstar {
                k,
                lambda,
                embed_seed,
            } => MethodSpec::LanternGstar {
                k,
                lambda,
                embed_seed,
            },
        }
    }
}

impl MethodSpec {
    /// Translate the method into concrete acceptance and resampling rules.
    pub fn build_rules(
        &self,
        draft_len: usize,
        vocab_size: usize,
    ) -> Result<(AcceptanceRule, ResamplingRule)> {
        let pair = match *self {
            MethodSpec::Vanilla => (AcceptanceRule::Vanilla, ResamplingRule::VanillaResidual),
            MethodSpec::Uniform { delta } => (
                AcceptanceRule::MultiplicativeRelax(Schedule::uniform(delta, draft_len)?),
                ResamplingRule::OptimalGStar,
            ),
            MethodSpec::CoolExp { delta, nu } => (
                AcceptanceRule::MultiplicativeRelax(Schedule::exponential(delta, nu, draft_len)?),
                ResamplingRule::OptimalGStar,
            ),
            MethodSpec::CoolLinear { delta, ell } => (
                AcceptanceRule::MultiplicativeRelax(Schedule::linear(delta, ell, draft_len)?),
                ResamplingRule::OptimalGStar,
            ),
            MethodSpec::Lantern {
                k,
                lambda,
                embed_seed,
            } => {
                let embeddings = TokenEmbedding::random(vocab_size, EMBED_DIM, embed_seed)?;
                (
                    AcceptanceRule::LanternPP {
                        k,
                        lambda,
                        embeddings: embeddings.clone(),
                    },
                    ResamplingRule::LanternResidual {
                        k,
                        lambda,
                        embeddings,
                    },
                )
            }
            MethodSpec::LanternGstar {
                k,
                lambda,
                embed_seed,
            } => {
                let embeddings = TokenEmbedding::random(vocab_size, EMBED_DIM, embed_seed)?;
                (
                    AcceptanceRule::LanternPP {
                        k,
                        lambda,
                        embeddings,
                    },
                    ResamplingRule::OptimalGStar,
                )
            }
        };
        Ok(pair)
    }

    /// Apply an explicit resampling override on top of the method default.
    pub fn build_rules_with_override(
        &self,
        draft_len: usize,
        vocab_size: usize,
        overridden: Option<ResamplingSpec>,
    ) -> Result<(AcceptanceRule, ResamplingRule)> {
        let (acceptance, default_res) = self.build_rules(draft_len, vocab_size)?;
        let resampling = match overridden {
            None => default_res,
            Some(ResamplingSpec::Vanilla) => ResamplingRule::VanillaResidual,
            Some(ResamplingSpec::Gstar) => ResamplingRule::OptimalGStar,
            Some(ResamplingSpec::Lantern) => match *self {
                MethodSpec::Lantern {
                    k,
                    lambda,
                    embed_seed,
                }
                | MethodSpec::LanternGstar {
                    k,
                    lambda,
                    embed_seed,
                } => ResamplingRule::LanternResidual {
                    k,
                    lambda,
                    embeddings: TokenEmbedding::random(vocab_size, EMBED_DIM, embed_seed)?,
                },
                _ => {
                    return Err(Error::Config(
                        "lantern resampling override requires a lantern method".into(),
                    ))
                }
            },
        };
        Ok((acceptance, resampling))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingSpec {
    Vanilla,
    Gstar,
    Lantern,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub delta_grid: Vec<f64>,
    pub methods: Vec<SweepMethodSpec>,
}

#[derive(Debug, Clone)]
pub struct VerifySpec {
    pub seeds: u64,
    pub negative_dominance_omega: Option<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            seeds: 100,
            negative_dominance_omega: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw wire forms
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigRepr {
    models: ModelsRepr,
    #[serde(rename = "L")]
    draft_len: usize,
    #[serde(default)]
    method: Option<MethodRepr>,
    #[serde(default)]
    resampling: Option<ResamplingSpec>,
    #[serde(default)]
    n_rounds: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_path: Option<PathBuf>,
    #[serde(default)]
    sweep: Option<SweepRepr>,
    #[serde(default)]
    verify: Option<VerifyRepr>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelsRepr {
    Random(RandomModelsRepr),
    Inline(InlineModelsRepr),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomModelsRepr {
    vocab_size: usize,
    depth: usize,
    #[serde(default = "default_concentration")]
    concentration: f64,
    seed_p: u64,
    seed_q: u64,
}

fn default_concentration() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineModelsRepr {
    p: ArModel,
    q: ArModel,
}

/// Flat method object; which fields are allowed depends on `kind`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodRepr {
    kind: String,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    nu: Option<f64>,
    #[serde(default)]
    ell: Option<usize>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    embed_seed: Option<u64>,
    /// Optional redundant draft length; must match the config-level `L`.
    #[serde(default, rename = "L")]
    draft_len: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRepr {
    delta_grid: DeltaGridRepr,
    methods: Vec<MethodRepr>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltaRangeRepr {
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DeltaGridRepr {
    List(Vec<f64>),
    Range(DeltaRangeRepr),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyRepr {
    #[serde(default = "default_verify_seeds")]
    seeds: u64,
    #[serde(default)]
    negative_dominance_omega: Option<f64>,
}

fn default_verify_seeds() -> u64 {
    100
}

impl MethodRepr {
    fn field_error(kind: &str, field: &str) -> Error {
        Error::Config(format!("method `{kind}` does not take field `{field}`"))
    }

    fn require<T: Copy>(kind: &str, field: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| Error::Config(format!("method `{kind}` requires field `{field}`")))
    }

    fn forbid<T>(kind: &str, field: &str, value: &Option<T>) -> Result<()> {
        if value.is_some() {
            return Err(Self::field_error(kind, field));
        }
        Ok(())
    }

    fn check_draft_len(&self, config_l: usize) -> Result<()> {
        if let Some(l) = self.draft_len {
            if l != config_l {
                return Err(Error::Config(format!(
                    "method-level L = {l} contradicts config-level L = {config_l}"
                )));
            }
        }
        Ok(())
    }

    fn into_method(self, config_l: usize) -> Result<MethodSpec> {
        self.check_draft_len(config_l)?;
        let kind = self.kind.clone();
        match kind.as_str() {
            "vanilla" => {
                Self::forbid(&kind, "delta", &self.delta)?;
                self.forbid_schedule_and_lantern(&kind)?;
                Ok(MethodSpec::Vanilla)
            }
            "uniform" => {
                let delta = Self::require(&kind, "delta", self.delta)?;
                self.forbid_schedule_and_lantern(&kind)?;
                Ok(MethodSpec::Uniform { delta })
            }
            "cool_exp" => {
                let delta = Self::require(&kind, "delta", self.delta)?;
                let nu = Self::require(&kind, "nu", self.nu)?;
                Self::forbid(&kind, "ell", &self.ell)?;
                self.forbid_lantern(&kind)?;
                Ok(MethodSpec::CoolExp { delta, nu })
            }
            "cool_linear" => {
                let delta = Self::require(&kind, "delta", self.delta)?;
                let ell = Self::require(&kind, "ell", self.ell)?;
                Self::forbid(&kind, "nu", &self.nu)?;
                self.forbid_lantern(&kind)?;
                Ok(MethodSpec::CoolLinear { delta, ell })
            }
            "lantern" | "lantern_gstar" => {
                Self::forbid(&kind, "delta", &self.delta)?;
                Self::forbid(&kind, "nu", &self.nu)?;
                Self::forbid(&kind, "ell", &self.ell)?;
                let k = Self::require(&kind, "k", self.k)?;
                let lambda = Self::require(&kind, "lambda", self.lambda)?;
                let embed_seed = Self::require(&kind, "embed_seed", self.embed_seed)?;
                if kind == "lantern" {
                    Ok(MethodSpec::Lantern {
                        k,
                        lambda,
                        embed_seed,
                    })
                } else {
                    Ok(MethodSpec::LanternGstar {
                        k,
                        lambda,
                        embed_seed,
                    })
                }
            }
            other => Err(Error::Config(format!("unknown method kind `{other}`"))),
        }
    }

    fn into_sweep_method(self, config_l: usize) -> Result<SweepMethodSpec> {
        self.check_draft_len(config_l)?;
        let kind = self.kind.clone();
        Self::forbid(&kind, "delta", &self.delta)?;
        match kind.as_str() {
            "vanilla" => {
                self.forbid_schedule_and_lantern(&kind)?;
                Ok(SweepMethodSpec::Vanilla)
            }
            "uniform" => {
                self.forbid_schedule_and_lantern(&kind)?;
                Ok(SweepMethodSpec::Uniform)
            }
            "cool_exp" => {
                let nu = Self::require(&kind, "nu", self.nu)?;
                Self::forbid(&kind, "ell", &self.ell)?;
                self.forbid_lantern(&kind)?;
                Ok(SweepMethodSpec::CoolExp { nu })
            }
            "cool_linear" => {
                let ell = Self::require(&kind, "ell", self.ell)?;
                Self::forbid(&kind, "nu", &self.nu)?;
                self.forbid_lantern(&kind)?;
                Ok(SweepMethodSpec::CoolLinear { ell })
            }
            "lantern" | "lantern_gstar" => {
                Self::forbid(&kind, "nu", &self.nu)?;
                Self::forbid(&kind, "ell", &self.ell)?;
                let k = Self::require(&kind, "k", self.k)?;
                let lambda = Self::require(&kind, "lambda", self.lambda)?;
                let embed_seed = Self::require(&kind, "embed_seed", self.embed_seed)?;
                if kind == "lantern" {
                    Ok(SweepMethodSpec::Lantern {
                        k,
                        lambda,
                        embed_seed,
                    })
                } else {
                    Ok(SweepMethodSpec::LanternGstar {
                        k,
                        lambda,
                        embed_seed,
                    })
                }
            }
            other => Err(Error::Config(format!("unknown method kind `{other}`"))),
        }
    }

    fn forbid_schedule_and_lantern(&self, kind: &str) -> Result<()> {
        Self::forbid(kind, "nu", &self.nu)?;
        Self::forbid(kind, "ell", &self.ell)?;
        self.forbid_lantern(kind)
    }

    fn forbid_lantern(&self, kind: &str) -> Result<()> {
        Self::forbid(kind, "k", &self.k)?;
        Self::forbid(kind, "lambda", &self.lambda)?;
        Self::forbid(kind, "embed_seed", &self.embed_seed)
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let repr: ConfigRepr = serde_json::from_str(text)?;
        if repr.draft_len == 0 {
            return Err(Error::Config("L must be at least 1".into()));
        }
        let models = match repr.models {
            ModelsRepr::Random(r) => ModelsSpec::Random {
                vocab_size: r.vocab_size,
                depth: r.depth,
                concentration: r.concentration,
                seed_p: r.seed_p,
                seed_q: r.seed_q,
            },
            ModelsRepr::Inline(i) => ModelsSpec::Inline { p: i.p, q: i.q },
        };
        let method = repr
            .method
            .map(|m| m.into_method(repr.draft_len))
            .transpose()?;
        let sweep = repr
            .sweep
            .map(|s| -> Result<SweepSpec> {
                let delta_grid = match s.delta_grid {
                    DeltaGridRepr::List(list) => list,
                    DeltaGridRepr::Range(r) => expand_range(&r)?,
                };
                if delta_grid.is_empty() {
                    return Err(Error::Config("sweep delta grid is empty".into()));
                }
                if delta_grid.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
                    return Err(Error::Config("sweep deltas must be positive".into()));
                }
                let methods = s
                    .methods
                    .into_iter()
                    .map(|m| m.into_sweep_method(repr.draft_len))
                    .collect::<Result<Vec<_>>>()?;
                if methods.is_empty() {
                    return Err(Error::Config("sweep needs at least one method".into()));
                }
                Ok(SweepSpec {
                    delta_grid,
                    methods,
                })
            })
            .transpose()?;
        let verify = repr.verify.map(|v| VerifySpec {
            seeds: v.seeds,
            negative_dominance_omega: v.negative_dominance_omega,
        });
        Ok(ExperimentConfig {
            models,
            draft_len: repr.draft_len,
            method,
            resampling: repr.resampling,
            n_rounds: repr.n_rounds,
            seed: repr.seed,
            output_path: repr.output_path,
            sweep,
            verify,
        })
    }
}

fn expand_range(r: &DeltaRangeRepr) -> Result<Vec<f64>> {
    if !(r.step > 0.0) || r.stop < r.start {
        return Err(Error::Config(
            "delta range needs step > 0 and stop >= start".into(),
        ));
    }
    let n = ((r.stop - r.start) / r.step + 1.0 + 1e-9).floor() as usize;
    Ok((0..n).map(|i| r.start + i as f64 * r.step).collect())
}
