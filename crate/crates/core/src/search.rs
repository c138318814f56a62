//! Predictor-guided iterative sampling over a tabular benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::benchmark::TabularBenchmark;
use crate::cellgraph::CellArch;
use crate::encodings::{unify, SupplementalTable};
use crate::error::{Error, Result};
use crate::predictor::{parse_scalar, PredictorConfig, PredictorModel};
use crate::rng;
use crate::training::{fit, transfer, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Architectures evaluated per iteration (`n`), half exploit, half explore.
    pub budget_per_iter: usize,
    pub max_iters: usize,
    /// Uniform sample evaluated before the first ranking; `budget_per_iter`
    /// when unset.
    pub initial_sample: Option<usize>,
    pub pool_floor: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget_per_iter: 16,
            max_iters: 3,
            initial_sample: None,
            pool_floor: 512,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn initial(&self) -> usize {
        self.initial_sample.unwrap_or(self.budget_per_iter)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget_per_iter < 2 || self.budget_per_iter % 2 != 0 {
            return Err(Error::Config(format!(
                "budget_per_iter must be even and at least 2, got {}",
                self.budget_per_iter
            )));
        }
        if self.initial() < self.budget_per_iter {
            return Err(Error::Config(format!(
                "initial_sample ({}) must be at least budget_per_iter ({})",
                self.initial(),
                self.budget_per_iter
            )));
        }
        Ok(())
    }

    /// Assigns one field from its textual form; `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "budget_per_iter" => self.budget_per_iter = parse_scalar(key, value)?,
            "max_iters" => self.max_iters = parse_scalar(key, value)?,
            "initial_sample" => self.initial_sample = Some(parse_scalar(key, value)?),
            "pool_floor" => self.pool_floor = parse_scalar(key, value)?,
            "seed" => self.seed = parse_scalar(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// `max(floor, ceil(m / 2^i))`.
pub fn pool_size(m: usize, i: u32, floor: usize) -> usize {
    let halved = if i >= usize::BITS {
        usize::from(m > 0)
    } else {
        m.div_ceil(1 << i)
    };
    floor.max(halved)
}

/// Scores candidate architectures given everything evaluated so far.
pub trait Surrogate {
    fn name(&self) -> &str;

    /// Higher is better. `evaluated` holds `(arch_id, accuracy)` in
    /// evaluation order; the result is aligned with `candidates`.
    fn rank(
        &mut self,
        bench: &TabularBenchmark,
        evaluated: &[(u64, f64)],
        candidates: &[u64],
        iteration: usize,
    ) -> Result<Vec<f64>>;
}

/// Scores every architecture with its true accuracy.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleSurrogate;

impl Surrogate for OracleSurrogate {
    fn name(&self) -> &str {
        "oracle"
    }

    fn rank(&mut self, bench: &TabularBenchmark, _: &[(u64, f64)], candidates: &[u64], _: usize) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|&id| bench.accuracy(id).ok_or_else(|| Error::invalid(format!("arch {id} not in benchmark"))))
            .collect()
    }
}

/// Gives every architecture the same score, so exploitation follows id order.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantSurrogate;

impl Surrogate for ConstantSurrogate {
    fn name(&self) -> &str {
        "constant"
    }

    fn rank(&mut self, _: &TabularBenchmark, _: &[(u64, f64)], candidates: &[u64], _: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; candidates.len()])
    }
}

/// FLAN predictor retrained on all evaluated architectures every iteration.
///
/// Without a base model each iteration starts from a fresh initialization and
/// trains for `train.epochs`; with one it starts from a copy of the base and
/// fine-tunes for `train.transfer_epochs` at `train.transfer_lr`.
#[derive(Clone, Debug)]
pub struct FlanSurrogate {
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub supplemental: Option<SupplementalTable>,
    pub base: Option<PredictorModel>,
    last: Option<PredictorModel>,
}

impl FlanSurrogate {
    pub fn new(predictor: PredictorConfig, train: TrainConfig) -> Self {
        Self {
            predictor,
            train,
            supplemental: None,
            base: None,
            last: None,
        }
    }

    pub fn with_supplemental(mut self, table: SupplementalTable) -> Self {
        self.supplemental = Some(table);
        self
    }

    pub fn with_base(mut self, model: PredictorModel) -> Self {
        self.base = Some(model);
        self
    }

    /// Model trained in the most recent iteration.
    pub fn last_model(&self) -> Option<&PredictorModel> {
        self.last.as_ref()
    }
}

impl Surrogate for FlanSurrogate {
    fn name(&self) -> &str {
        "flan"
    }

    fn rank(
        &mut self,
        bench: &TabularBenchmark,
        evaluated: &[(u64, f64)],
        candidates: &[u64],
        iteration: usize,
    ) -> Result<Vec<f64>> {
        let train = TrainConfig {
            seed: rng::derive_seed(self.train.seed, iteration as u64),
            ..self.train.clone()
        };
        let ids: Vec<u64> = evaluated.iter().map(|&(id, _)| id).collect();
        let supp = self.supplemental.as_ref();
        let model = match &self.base {
            Some(base) => {
                let mut model = base.clone();
                transfer(&mut model, bench, &ids, &train, supp)?;
                model
            }
            None => {
                let vocab = unify(std::slice::from_ref(&bench.vocab))?;
                let mut model = PredictorModel::init(self.predictor.clone(), vocab, train.seed)?;
                fit(&mut model, bench, &ids, &train, supp)?;
                model
            }
        };
        let archs: Vec<&CellArch> = candidates
            .iter()
            .map(|&id| bench.arch(id).ok_or_else(|| Error::invalid(format!("arch {id} not in benchmark"))))
            .collect::<Result<_>>()?;
        let scores = model.predict(&archs, supp)?;
        self.last = Some(model);
        Ok(scores)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Exploit,
    Explore,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Exploit => "exploit",
            Phase::Explore => "explore",
        })
    }
}

/// One evaluated architecture. Initial samples carry iteration 0 and no score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub pool_size: usize,
    pub phase: Phase,
    pub arch_id: u64,
    pub true_acc: f64,
    pub pred_score: Option<f64>,
    pub best_so_far: f64,
}

pub const TRACE_HEADER: &str = "iter,pool_size,phase,arch_id,true_acc,pred_score,best_so_far";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    /// Last iteration run; 0 until the first ranking.
    pub iteration: usize,
    pub evaluated: BTreeMap<u64, f64>,
    pub best_so_far: Option<(u64, f64)>,
    pub trace: Vec<TraceRow>,
    /// Iteration that ran short of its budget because the space ran out.
    pub partial_iteration: Option<usize>,
}

impl SearchState {
    fn record(&mut self, bench: &TabularBenchmark, iter: usize, pool: usize, phase: Phase, id: u64, score: Option<f64>) -> Result<()> {
        let acc = bench
            .accuracy(id)
            .ok_or_else(|| Error::invalid(format!("arch {id} not in benchmark")))?;
        if self.evaluated.insert(id, acc).is_some() {
            return Err(Error::invalid(format!("arch {id} evaluated twice")));
        }
        let better = match self.best_so_far {
            None => true,
            Some((best_id, best)) => acc > best || (acc == best && id < best_id),
        };
        if better {
            self.best_so_far = Some((id, acc));
        }
        self.trace.push(TraceRow {
            iter,
            pool_size: pool,
            phase,
            arch_id: id,
            true_acc: acc,
            pred_score: score,
            best_so_far: self.best_so_far.map_or(acc, |(_, a)| a),
        });
        Ok(())
    }

    /// Ids chosen in `iteration`, in evaluation order.
    pub fn chosen(&self, iteration: usize) -> Vec<u64> {
        self.trace.iter().filter(|r| r.iter == iteration).map(|r| r.arch_id).collect()
    }

    pub fn write_trace_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.trace {
            let score = r.pred_score.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iter, r.pool_size, r.phase, r.arch_id, r.true_acc, score, r.best_so_far
            )?;
        }
        Ok(())
    }
}

/// Runs iterative sampling: an initial uniform sample, then per iteration
/// the top `n/2` unevaluated architectures by predicted score (ties by
/// ascending id) and `n/2` drawn uniformly from the rest of the top
/// `pool_size(m, i)`.
pub fn search(bench: &TabularBenchmark, surrogate: &mut dyn Surrogate, cfg: &SearchConfig) -> Result<SearchState> {
    cfg.validate()?;
    let m = bench.len();
    let mut r = rng::rng_from_seed(rng::derive_seed(cfg.seed, 0x5ea7c4));
    let mut state = SearchState::default();
    let mut remaining: BTreeSet<u64> = bench.ids().into_iter().collect();

    let all: Vec<u64> = remaining.iter().copied().collect();
    for id in rng::sample_without_replacement(&mut r, &all, cfg.initial()) {
        state.record(bench, 0, m, Phase::Init, id, None)?;
        remaining.remove(&id);
    }
    if cfg.initial() > m {
        state.partial_iteration = Some(0);
        return Ok(state);
    }

    let half = cfg.budget_per_iter / 2;
    for i in 1..=cfg.max_iters {
        if remaining.is_empty() {
            break;
        }
        state.iteration = i;
        let candidates: Vec<u64> = remaining.iter().copied().collect();
        let evaluated: Vec<(u64, f64)> = state.trace.iter().map(|t| (t.arch_id, t.true_acc)).collect();
        let scores = surrogate.rank(bench, &evaluated, &candidates, i)?;
        if scores.len() != candidates.len() {
            return Err(Error::invalid(format!(
                "surrogate `{}` returned {} scores for {} candidates",
                surrogate.name(),
                scores.len(),
                candidates.len()
            )));
        }
        if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score {} for arch {} in iteration {i}", scores[k], candidates[k])));
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(candidates[a].cmp(&candidates[b])));

        let pool = pool_size(m, i.min(u32::MAX as usize) as u32, cfg.pool_floor);
        let exploit = half.min(order.len());
        for &k in &order[..exploit] {
            state.record(bench, i, pool, Phase::Exploit, candidates[k], Some(scores[k]))?;
            remaining.remove(&candidates[k]);
        }
        let rest = &order[exploit..pool.min(order.len()).max(exploit)];
        let explored = rng::sample_without_replacement(&mut r, rest, half);
        for &k in &explored {
            state.record(bench, i, pool, Phase::Explore, candidates[k], Some(scores[k]))?;
            remaining.remove(&candidates[k]);
        }
        if exploit + explored.len() < cfg.budget_per_iter {
            state.partial_iteration = Some(i);
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_size_examples() {
        assert_eq!(pool_size(4096, 1, 512), 2048);
        assert_eq!(pool_size(4096, 3, 512), 512);
        assert_eq!(pool_size(4096, 5, 512), 512);
        assert_eq!(pool_size(1000, 3, 0), 125);
        assert_eq!(pool_size(1001, 3, 0), 126);
        assert_eq!(pool_size(7, 200, 0), 1);
    }

    #[test]
    fn config_rejects_odd_budget() {
        let cfg = SearchConfig {
            budget_per_iter: 3,
            ..SearchConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SearchConfig {
            budget_per_iter: 4,
            initial_sample: Some(2),
            ..SearchConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn initial_sample_follows_budget_until_set() {
        let mut cfg = SearchConfig::default();
        assert!(cfg.set("budget_per_iter", "32").unwrap());
        assert_eq!(cfg.initial(), 32);
        assert!(cfg.set("initial_sample", "40").unwrap());
        assert_eq!(cfg.initial(), 40);
        assert!(cfg.validate().is_ok());
        assert!(!cfg.set("nope", "1").unwrap());
        assert!(cfg.set("max_iters", "x").is_err());
    }

    #[test]
    fn trace_csv_header_and_blank_init_score() {
        let mut state = SearchState::default();
        state.trace.push(TraceRow {
            iter: 0,
            pool_size: 10,
            phase: Phase::Init,
            arch_id: 4,
            true_acc: 0.5,
            pred_score: None,
            best_so_far: 0.5,
        });
        let mut out = Vec::new();
        state.write_trace_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{TRACE_HEADER}\n0,10,init,4,0.5,,0.5\n"));
    }
}
