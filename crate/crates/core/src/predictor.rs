//! The FLAN accuracy predictor.
//!
//! Each cell is encoded by two stacked graph flows over its DAG: a dense
//! graph flow (DGF) that gates neighbour aggregation by the node's operation
//! embedding, and a graph-attention flow (GAT). Operation embeddings are
//! refined over `timesteps` passes by a backward flow over the reversed
//! edges. Node features are mean-pooled, optionally joined with an embedded
//! supplemental vector, and mapped to a score by an MLP head.
//!
//! Batches are evaluated as one block-diagonal graph so every layer is a
//! handful of dense matrix products.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Tape, Tensor, Var};
use crate::cellgraph::{CellArch, CellGraph, OP_INPUT};
use crate::encodings::{SupplementalTable, UnifiedVocab};
use crate::error::{Error, Result};
use crate::rng::{self, FlanRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    Dgf,
    Gat,
    Ensemble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    SharedSigmoid,
    KqvSoftmax,
}

impl FromStr for FlowMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgf" => Ok(FlowMode::Dgf),
            "gat" => Ok(FlowMode::Gat),
            "ensemble" => Ok(FlowMode::Ensemble),
            _ => Err(Error::Config(format!("unknown flow mode `{s}` (dgf, gat, ensemble)"))),
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowMode::Dgf => "dgf",
            FlowMode::Gat => "gat",
            FlowMode::Ensemble => "ensemble",
        })
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared_sigmoid" => Ok(AttentionVariant::SharedSigmoid),
            "kqv_softmax" => Ok(AttentionVariant::KqvSoftmax),
            _ => Err(Error::Config(format!(
                "unknown attention variant `{s}` (shared_sigmoid, kqv_softmax)"
            ))),
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionVariant::SharedSigmoid => "shared_sigmoid",
            AttentionVariant::KqvSoftmax => "kqv_softmax",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub op_embedding_dim: usize,
    pub node_embedding_dim: usize,
    pub hidden_dim: usize,
    pub gcn_dims: Vec<usize>,
    pub mlp_dims: Vec<usize>,
    pub backward_gcn_dims: Vec<usize>,
    pub op_update_mlp_dims: Vec<usize>,
    pub supp_embedder_dims: Vec<usize>,
    pub nn_emb_dim: usize,
    pub timesteps: usize,
    pub forward_mode: FlowMode,
    pub backward_mode: FlowMode,
    pub attention_variant: AttentionVariant,
    /// Map operations through the cross-space index; otherwise local op ids
    /// index the table directly.
    pub unified: bool,
    /// Dimensions of the supplemental tables, in concatenation order.
    pub supplemental_dims: Vec<usize>,
    pub cells_per_arch: usize,
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
    /// Let every node attend to itself as well as to its in-neighbours.
    /// Without it the attention flow has no path that keeps a node's own
    /// features, and a deep GAT-only stack forgets the input node.
    pub gat_self_loops: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            op_embedding_dim: 48,
            node_embedding_dim: 48,
            hidden_dim: 96,
            gcn_dims: vec![128; 5],
            mlp_dims: vec![200; 3],
            backward_gcn_dims: vec![128; 5],
            op_update_mlp_dims: vec![128],
            supp_embedder_dims: vec![128, 128],
            nn_emb_dim: 128,
            timesteps: 2,
            forward_mode: FlowMode::Ensemble,
            backward_mode: FlowMode::Ensemble,
            attention_variant: AttentionVariant::SharedSigmoid,
            unified: true,
            supplemental_dims: Vec::new(),
            cells_per_arch: 1,
            leaky_slope: 0.2,
            layer_norm_eps: 1e-5,
            gat_self_loops: true,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("op_embedding_dim", self.op_embedding_dim),
            ("node_embedding_dim", self.node_embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("nn_emb_dim", self.nn_emb_dim),
            ("timesteps", self.timesteps),
        ];
        for (name, v) in scalars {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let lists = [
            ("gcn_dims", &self.gcn_dims),
            ("mlp_dims", &self.mlp_dims),
            ("backward_gcn_dims", &self.backward_gcn_dims),
            ("op_update_mlp_dims", &self.op_update_mlp_dims),
            ("supp_embedder_dims", &self.supp_embedder_dims),
            ("supplemental_dims", &self.supplemental_dims),
        ];
        for (name, dims) in lists {
            if dims.contains(&0) {
                return Err(Error::Config(format!("{name} entries must be positive")));
            }
        }
        if self.gcn_dims.is_empty() {
            return Err(Error::Config("gcn_dims needs at least one layer".into()));
        }
        if self.timesteps > 1 && self.backward_gcn_dims.is_empty() {
            return Err(Error::Config("backward_gcn_dims needs at least one layer when timesteps > 1".into()));
        }
        if !(1..=2).contains(&self.cells_per_arch) {
            return Err(Error::Config("cells_per_arch must be 1 or 2".into()));
        }
        if !(self.leaky_slope.is_finite() && self.layer_norm_eps > 0.0) {
            return Err(Error::Config("leaky_slope must be finite and layer_norm_eps positive".into()));
        }
        Ok(())
    }

    pub fn supplemental_dim(&self) -> usize {
        self.supplemental_dims.iter().sum()
    }

    /// Assigns one field from its textual form. Returns `Ok(false)` if the
    /// key is not a predictor field.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "op_embedding_dim" => self.op_embedding_dim = parse_scalar(key, value)?,
            "node_embedding_dim" => self.node_embedding_dim = parse_scalar(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_scalar(key, value)?,
            "gcn_dims" => self.gcn_dims = parse_list(key, value)?,
            "mlp_dims" => self.mlp_dims = parse_list(key, value)?,
            "backward_gcn_dims" => self.backward_gcn_dims = parse_list(key, value)?,
            "op_update_mlp_dims" => self.op_update_mlp_dims = parse_list(key, value)?,
            "supp_embedder_dims" => self.supp_embedder_dims = parse_list(key, value)?,
            "nn_emb_dim" => self.nn_emb_dim = parse_scalar(key, value)?,
            "timesteps" => self.timesteps = parse_scalar(key, value)?,
            "forward_mode" => self.forward_mode = value.parse()?,
            "backward_mode" => self.backward_mode = value.parse()?,
            "attention_variant" => self.attention_variant = value.parse()?,
            "unified" => self.unified = parse_scalar(key, value)?,
            "supplemental_dims" => self.supplemental_dims = parse_list(key, value)?,
            "cells_per_arch" => self.cells_per_arch = parse_scalar(key, value)?,
            "leaky_slope" => self.leaky_slope = parse_scalar(key, value)?,
            "layer_norm_eps" => self.layer_norm_eps = parse_scalar(key, value)?,
            "gat_self_loops" => self.gat_self_loops = parse_scalar(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub(crate) fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

/// Accepts `[1, 2, 3]`, `1,2,3` or `[]`.
pub(crate) fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|v| parse_scalar(key, v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Glorot,
    Zeros,
    Ones,
    Embedding,
}

#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct DgfIdx {
    w_o: usize,
    w_f: usize,
    b_f: usize,
}

#[derive(Clone, Copy, Debug)]
enum ProjIdx {
    Shared { w_p: usize },
    Kqv { w_q: usize, w_k: usize, w_v: usize },
}

#[derive(Clone, Copy, Debug)]
struct GatIdx {
    proj: ProjIdx,
    a_src: usize,
    a_dst: usize,
    w_o: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Copy, Debug)]
struct LayerIdx {
    dgf: Option<DgfIdx>,
    gat: Option<GatIdx>,
}

#[derive(Clone, Debug)]
struct CellIdx {
    node_emb: usize,
    x_proj: usize,
    forward: Vec<LayerIdx>,
    backward: Vec<LayerIdx>,
    update: Vec<Linear>,
    readout: Linear,
}

/// Names, shapes and roles of every parameter, derived from the config.
#[derive(Clone, Debug)]
struct Layout {
    specs: Vec<ParamSpec>,
    op_table: usize,
    cells: Vec<CellIdx>,
    supp: Vec<Linear>,
    head: Vec<Linear>,
}

impl Layout {
    fn new(config: &PredictorConfig, op_rows: usize) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, init: Init| {
            specs.push(ParamSpec { name, rows, cols, init });
            specs.len() - 1
        };
        let d_op = config.op_embedding_dim;
        let op_table = add("op_table".into(), op_rows, d_op, Init::Embedding);

        let linear = |add: &mut dyn FnMut(String, usize, usize, Init) -> usize, name: &str, i: usize, o: usize| Linear {
            w: add(format!("{name}.w"), i, o, Init::Glorot),
            b: add(format!("{name}.b"), 1, o, Init::Zeros),
        };

        let flow = |add: &mut dyn FnMut(String, usize, usize, Init) -> usize,
                    prefix: &str,
                    mode: FlowMode,
                    d_in: usize,
                    dims: &[usize]| {
            let mut layers = Vec::new();
            let mut d = d_in;
            for (l, &out) in dims.iter().enumerate() {
                let p = format!("{prefix}{l}");
                let dgf = (mode != FlowMode::Gat).then(|| DgfIdx {
                    w_o: add(format!("{p}.dgf.w_o"), d_op, out, Init::Glorot),
                    w_f: add(format!("{p}.dgf.w_f"), d, out, Init::Glorot),
                    b_f: add(format!("{p}.dgf.b_f"), 1, out, Init::Zeros),
                });
                let gat = (mode != FlowMode::Dgf).then(|| {
                    let proj = match config.attention_variant {
                        AttentionVariant::SharedSigmoid => ProjIdx::Shared {
                            w_p: add(format!("{p}.gat.w_p"), d, out, Init::Glorot),
                        },
                        AttentionVariant::KqvSoftmax => ProjIdx::Kqv {
                            w_q: add(format!("{p}.gat.w_q"), d, out, Init::Glorot),
                            w_k: add(format!("{p}.gat.w_k"), d, out, Init::Glorot),
                            w_v: add(format!("{p}.gat.w_v"), d, out, Init::Glorot),
                        },
                    };
                    GatIdx {
                        proj,
                        a_src: add(format!("{p}.gat.a_src"), out, 1, Init::Glorot),
                        a_dst: add(format!("{p}.gat.a_dst"), out, 1, Init::Glorot),
                        w_o: add(format!("{p}.gat.w_o"), d_op, out, Init::Glorot),
                        gamma: add(format!("{p}.gat.ln_gamma"), 1, out, Init::Ones),
                        beta: add(format!("{p}.gat.ln_beta"), 1, out, Init::Zeros),
                    }
                });
                layers.push(LayerIdx { dgf, gat });
                d = out;
            }
            layers
        };

        let fwd_out = *config.gcn_dims.last().expect("validated");
        let mut cells = Vec::new();
        for c in 0..config.cells_per_arch {
            let node_emb = add(format!("cell{c}.node_emb"), 2, config.node_embedding_dim, Init::Embedding);
            let x_proj = add(format!("cell{c}.x_proj"), config.node_embedding_dim, config.hidden_dim, Init::Glorot);
            let forward = flow(&mut add, &format!("cell{c}.fwd"), config.forward_mode, config.hidden_dim, &config.gcn_dims);
            let (backward, update) = if config.timesteps > 1 {
                let backward = flow(&mut add, &format!("cell{c}.bwd"), config.backward_mode, fwd_out, &config.backward_gcn_dims);
                let mut d = config.backward_gcn_dims.last().copied().unwrap_or(fwd_out) + d_op;
                let mut update = Vec::new();
                for (k, &h) in config.op_update_mlp_dims.iter().enumerate() {
                    update.push(linear(&mut add, &format!("cell{c}.op_update{k}"), d, h));
                    d = h;
                }
                update.push(linear(&mut add, &format!("cell{c}.op_update_out"), d, d_op));
                (backward, update)
            } else {
                (Vec::new(), Vec::new())
            };
            let readout = linear(&mut add, &format!("cell{c}.readout"), fwd_out, config.nn_emb_dim);
            cells.push(CellIdx {
                node_emb,
                x_proj,
                forward,
                backward,
                update,
                readout,
            });
        }

        let mut supp = Vec::new();
        let mut head_in = config.nn_emb_dim;
        if config.supplemental_dim() > 0 {
            let mut d = config.supplemental_dim();
            for (k, &h) in config.supp_embedder_dims.iter().enumerate() {
                supp.push(linear(&mut add, &format!("supp{k}"), d, h));
                d = h;
            }
            head_in += d;
        }
        let mut head = Vec::new();
        let mut d = head_in;
        for (k, &h) in config.mlp_dims.iter().enumerate() {
            head.push(linear(&mut add, &format!("head{k}"), d, h));
            d = h;
        }
        head.push(linear(&mut add, "head_out", d, 1));

        Self {
            specs,
            op_table,
            cells,
            supp,
            head,
        }
    }
}

fn draw(spec: &ParamSpec, r: &mut FlanRng) -> Tensor {
    let n = spec.rows * spec.cols;
    let data = match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Glorot => {
            let limit = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
            (0..n).map(|_| rng::uniform(r, -limit, limit)).collect()
        }
        Init::Embedding => {
            let std = 1.0 / (spec.cols as f64).sqrt();
            (0..n).map(|_| std * rng::normal(r)).collect()
        }
    };
    Tensor::matrix(spec.rows, spec.cols, data).expect("spec shape")
}

/// The trainable predictor: configuration, operation index and parameters.
#[derive(Clone, Debug)]
pub struct PredictorModel {
    config: PredictorConfig,
    vocab: UnifiedVocab,
    layout: Layout,
    params: Vec<Tensor>,
}

impl PartialEq for PredictorModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.vocab == other.vocab && self.params == other.params
    }
}

/// Rows the operation table needs for `vocab` under `config`.
fn op_rows(config: &PredictorConfig, vocab: &UnifiedVocab) -> usize {
    if config.unified {
        vocab.size()
    } else {
        vocab.vocabularies().map(|v| v.size()).max().unwrap_or(0)
    }
}

impl PredictorModel {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains and
    /// `N(0, 1/sqrt(d))` embedding rows, all drawn from `seed`.
    pub fn init(config: PredictorConfig, vocab: UnifiedVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, op_rows(&config, &vocab));
        let mut r = rng::rng_from_seed(rng::derive_seed(seed, 0x1417));
        let params = layout.specs.iter().map(|s| draw(s, &mut r)).collect();
        Ok(Self {
            config,
            vocab,
            layout,
            params,
        })
    }

    /// Rebuilds a model from named tensors, checking every name and shape.
    pub fn from_named(config: PredictorConfig, vocab: UnifiedVocab, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, op_rows(&config, &vocab));
        if named.len() != layout.specs.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, model has {}",
                named.len(),
                layout.specs.len()
            )));
        }
        let mut params = Vec::with_capacity(named.len());
        for (spec, (name, t)) in layout.specs.iter().zip(named) {
            if spec.name != name {
                return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{name}`", spec.name)));
            }
            if t.shape() != [spec.rows, spec.cols] {
                return Err(Error::TensorShape {
                    name,
                    expected: vec![spec.rows, spec.cols],
                    found: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("tensor `{name}`")));
            }
            params.push(t);
        }
        Ok(Self {
            config,
            vocab,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn vocab(&self) -> &UnifiedVocab {
        &self.vocab
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.layout.specs.iter().map(|s| s.name.as_str())
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.param_names().zip(&self.params)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.layout.specs.iter().position(|s| s.name == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.layout
            .specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &mut self.params[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn op_table_rows(&self) -> usize {
        self.params[self.layout.op_table].rows()
    }

    /// Registers a new search space. New operation-table rows are appended
    /// and freshly drawn from `seed`; existing rows are untouched.
    pub fn extend_vocab(&mut self, vocab: &crate::cellgraph::OpVocabulary, seed: u64) -> Result<usize> {
        let mut grown = self.vocab.clone();
        grown.extend(vocab)?;
        let new_rows = op_rows(&self.config, &grown);
        let old = &self.params[self.layout.op_table];
        let added = new_rows.saturating_sub(old.rows());
        if added > 0 {
            let spec = ParamSpec {
                name: "op_table".into(),
                rows: added,
                cols: old.cols(),
                init: Init::Embedding,
            };
            let mut r = rng::rng_from_seed(rng::derive_seed(seed, 0x0e47));
            let fresh = draw(&spec, &mut r);
            let mut data = old.data().to_vec();
            data.extend_from_slice(fresh.data());
            let table = Tensor::matrix(new_rows, old.cols(), data)?;
            self.layout = Layout::new(&self.config, new_rows);
            self.params[self.layout.op_table] = table;
        }
        self.vocab = grown;
        Ok(added)
    }

    fn op_row(&self, cell: &CellGraph, local: usize) -> Result<usize> {
        if self.config.unified {
            return self.vocab.unified_id(cell.space_id, local);
        }
        if local >= self.op_table_rows() {
            return Err(Error::VocabularyMiss {
                space_id: cell.space_id,
                local_op: local,
            });
        }
        Ok(local)
    }

    /// Packs architectures into block-diagonal graphs, one per cell slot.
    pub fn prepare(&self, archs: &[&CellArch], supplemental: Option<&SupplementalTable>) -> Result<Batch> {
        if archs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let b = archs.len();
        let mut cells = Vec::with_capacity(self.config.cells_per_arch);
        for slot in 0..self.config.cells_per_arch {
            let mut graphs = Vec::with_capacity(b);
            for arch in archs {
                if arch.cells.len() != self.config.cells_per_arch {
                    return Err(Error::invalid(format!(
                        "arch {} has {} cells, predictor expects {}",
                        arch.arch_id,
                        arch.cells.len(),
                        self.config.cells_per_arch
                    )));
                }
                graphs.push(&arch.cells[slot]);
            }
            cells.push(self.pack(&graphs)?);
        }
        let d_s = self.config.supplemental_dim();
        let supp = if d_s == 0 {
            None
        } else {
            let table = supplemental.ok_or_else(|| {
                Error::invalid(format!("predictor expects a {d_s}-dim supplemental vector per arch"))
            })?;
            if table.dim != d_s {
                return Err(Error::shape(
                    "supplemental",
                    format!("table `{}` has dim {}, predictor expects {d_s}", table.kind, table.dim),
                ));
            }
            let mut data = Vec::with_capacity(b * d_s);
            for arch in archs {
                data.extend_from_slice(table.get(arch.arch_id)?);
            }
            Some(Tensor::matrix(b, d_s, data)?)
        };
        Ok(Batch { size: b, cells, supp })
    }

    fn pack(&self, graphs: &[&CellGraph]) -> Result<CellBatch> {
        let n: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let b = graphs.len();
        let mut agg_in = Tensor::zeros(n, n);
        let mut agg_out = Tensor::zeros(n, n);
        let self_loop = if self.config.gat_self_loops { 1.0 } else { 0.0 };
        let mut mask_in = Tensor::zeros(n, n);
        for i in 0..n {
            mask_in.set(i, i, self_loop);
        }
        let mut mask_out = mask_in.clone();
        let mut pool = Tensor::zeros(b, n);
        let mut op_rows = Vec::with_capacity(n);
        let mut roles = Vec::with_capacity(n);
        let mut base = 0;
        for (k, g) in graphs.iter().enumerate() {
            let active = g.num_active_nodes();
            if active == 0 {
                return Err(Error::InvalidCell(crate::cellgraph::Diagnostic::TooSmall(0)));
            }
            for i in 0..g.num_nodes() {
                op_rows.push(self.op_row(g, g.op(i))?);
                roles.push(if g.op(i) == OP_INPUT { 0 } else { 1 });
                if !g.is_pruned(i) {
                    pool.set(k, base + i, 1.0 / active as f64);
                }
            }
            for (i, j) in g.edges() {
                agg_in.set(base + j, base + i, 1.0);
                agg_out.set(base + i, base + j, 1.0);
                mask_in.set(base + j, base + i, 1.0);
                mask_out.set(base + i, base + j, 1.0);
            }
            base += g.num_nodes();
        }
        Ok(CellBatch {
            agg_in,
            agg_out,
            mask_in,
            mask_out,
            pool,
            op_rows,
            roles,
        })
    }

    /// Adds every parameter to `tape` as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Adds every parameter to `tape` as a constant (inference only).
    pub fn constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    /// Records the forward pass; returns `batch.size x 1` scores. `params`
    /// holds one var per parameter, in [`PredictorModel::params`] order.
    pub fn scores(&self, tape: &mut Tape, params: &[Var], batch: &Batch) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::invalid("parameter var count does not match the model"));
        }
        let cfg = &self.config;
        let mut emb: Option<Var> = None;
        for (cell, idx) in batch.cells.iter().zip(&self.layout.cells) {
            let agg_in = tape.constant(cell.agg_in.clone());
            let agg_out = tape.constant(cell.agg_out.clone());
            let roles = tape.gather_rows(params[idx.node_emb], &cell.roles)?;
            let x0 = tape.matmul(roles, params[idx.x_proj])?;
            let mut ops = tape.gather_rows(params[self.layout.op_table], &cell.op_rows)?;
            let mut x = x0;
            for t in 0..cfg.timesteps {
                x = self.run_flow(tape, params, x0, agg_in, &cell.mask_in, ops, &idx.forward)?;
                if t + 1 < cfg.timesteps {
                    let back = self.run_flow(tape, params, x, agg_out, &cell.mask_out, ops, &idx.backward)?;
                    let mut h = tape.concat(&[back, ops], Axis::Cols)?;
                    for (k, lin) in idx.update.iter().enumerate() {
                        h = apply_linear(tape, params, h, *lin)?;
                        if k + 1 < idx.update.len() {
                            h = tape.relu(h);
                        }
                    }
                    ops = tape.add(ops, h)?;
                }
            }
            let pool = tape.constant(cell.pool.clone());
            let pooled = tape.matmul(pool, x)?;
            let e = apply_linear(tape, params, pooled, idx.readout)?;
            emb = Some(match emb {
                None => e,
                Some(prev) => tape.add(prev, e)?,
            });
        }
        let mut h = emb.expect("at least one cell");
        if let Some(s) = &batch.supp {
            let mut z = tape.constant(s.clone());
            for lin in &self.layout.supp {
                z = apply_linear(tape, params, z, *lin)?;
                z = tape.relu(z);
            }
            h = tape.concat(&[h, z], Axis::Cols)?;
        }
        for (k, lin) in self.layout.head.iter().enumerate() {
            h = apply_linear(tape, params, h, *lin)?;
            if k + 1 < self.layout.head.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_flow(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        agg: Var,
        mask: &Tensor,
        ops: Var,
        layers: &[LayerIdx],
    ) -> Result<Var> {
        let mut x = x;
        for layer in layers {
            let dgf = match layer.dgf {
                Some(p) => Some(dgf_layer(
                    tape,
                    x,
                    agg,
                    ops,
                    &DgfVars {
                        w_o: params[p.w_o],
                        w_f: params[p.w_f],
                        b_f: params[p.b_f],
                    },
                )?),
                None => None,
            };
            let gat = match layer.gat {
                Some(p) => {
                    let proj = match p.proj {
                        ProjIdx::Shared { w_p } => ProjVars::Shared { w_p: params[w_p] },
                        ProjIdx::Kqv { w_q, w_k, w_v } => ProjVars::Kqv {
                            w_q: params[w_q],
                            w_k: params[w_k],
                            w_v: params[w_v],
                        },
                    };
                    let vars = GatVars {
                        proj,
                        a_src: params[p.a_src],
                        a_dst: params[p.a_dst],
                        w_o: params[p.w_o],
                        gamma: params[p.gamma],
                        beta: params[p.beta],
                    };
                    Some(gat_layer(tape, x, mask, ops, &vars, self.config.leaky_slope, self.config.layer_norm_eps)?)
                }
                None => None,
            };
            x = match (dgf, gat) {
                (Some(d), Some(g)) => {
                    let s = tape.add(d, g)?;
                    tape.scale(s, 0.5)
                }
                (Some(d), None) => d,
                (None, Some(g)) => g,
                (None, None) => unreachable!("every layer has at least one branch"),
            };
        }
        Ok(x)
    }

    /// Scores a prepared batch without recording gradients.
    pub fn predict_batch(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.constants(&mut tape);
        let out = self.scores(&mut tape, &params, batch)?;
        let v = tape.value(out).data().to_vec();
        if let Some(where_) = tape.first_non_finite() {
            return Err(Error::NonFinite(format!("forward pass at {where_}")));
        }
        Ok(v)
    }

    /// Scores many architectures in chunks.
    pub fn predict(&self, archs: &[&CellArch], supplemental: Option<&SupplementalTable>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(archs.len());
        for chunk in archs.chunks(PREDICT_CHUNK) {
            let batch = self.prepare(chunk, supplemental)?;
            out.extend(self.predict_batch(&batch)?);
        }
        Ok(out)
    }

    /// Score of a single architecture.
    pub fn forward(&self, arch: &CellArch, supplemental: Option<&[f64]>) -> Result<f64> {
        let table = match supplemental {
            Some(v) => Some(SupplementalTable::new("supplemental", [(arch.arch_id, v.to_vec())].into())?),
            None => None,
        };
        Ok(self.predict(&[arch], table.as_ref())?[0])
    }

    /// FNV checksum over the first forward layer's weights of cell 0.
    pub fn first_layer_checksum(&self) -> u64 {
        let l = &self.layout.cells[0].forward[0];
        let idx = l
            .dgf
            .map(|d| d.w_f)
            .or(l.gat.map(|g| match g.proj {
                ProjIdx::Shared { w_p } => w_p,
                ProjIdx::Kqv { w_q, .. } => w_q,
            }))
            .expect("layer has a branch");
        self.params[idx].checksum()
    }
}

const PREDICT_CHUNK: usize = 16;

fn apply_linear(tape: &mut Tape, params: &[Var], x: Var, lin: Linear) -> Result<Var> {
    let h = tape.matmul(x, params[lin.w])?;
    tape.add_row(h, params[lin.b])
}

#[derive(Clone, Debug)]
struct CellBatch {
    /// `agg_in[i][j] = 1` when node `j` feeds node `i`.
    agg_in: Tensor,
    agg_out: Tensor,
    /// Attention neighbourhoods: the aggregation pattern plus optional
    /// self-loops.
    mask_in: Tensor,
    mask_out: Tensor,
    /// Mean over each architecture's non-pruned nodes.
    pool: Tensor,
    op_rows: Vec<usize>,
    roles: Vec<usize>,
}

/// Architectures packed for one forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    cells: Vec<CellBatch>,
    supp: Option<Tensor>,
}

pub struct DgfVars {
    pub w_o: Var,
    pub w_f: Var,
    pub b_f: Var,
}

/// `sigmoid(O W_o) * (agg (X W_f)) + X W_f + b_f`, where `agg[i][j]` is 1
/// when node `j` feeds node `i`.
pub fn dgf_layer(tape: &mut Tape, x: Var, agg: Var, ops: Var, p: &DgfVars) -> Result<Var> {
    let h = tape.matmul(x, p.w_f)?;
    let neigh = tape.matmul(agg, h)?;
    let gate_in = tape.matmul(ops, p.w_o)?;
    let gate = tape.sigmoid(gate_in);
    let gated = tape.mul(gate, neigh)?;
    let res = tape.add(gated, h)?;
    tape.add_row(res, p.b_f)
}

pub enum ProjVars {
    /// One projection shared by queries, keys and values.
    Shared { w_p: Var },
    Kqv { w_q: Var, w_k: Var, w_v: Var },
}

pub struct GatVars {
    pub proj: ProjVars,
    pub a_src: Var,
    pub a_dst: Var,
    pub w_o: Var,
    pub gamma: Var,
    pub beta: Var,
}

/// Graph attention over in-neighbours (`mask[i][j]` is 1 when `j` feeds
/// `i`). The raw score of edge `j -> i` is
/// `leaky_relu(a_src . q_i + a_dst . k_j)`. With a shared projection the
/// weight is `sigmoid(score)` on edges and zero elsewhere; with separate
/// projections it is a softmax over each node's in-neighbours. The weighted
/// sum of values is gated by `sigmoid(O W_o)` and layer-normalized per node
/// with a learned affine.
pub fn gat_layer(
    tape: &mut Tape,
    x: Var,
    mask: &Tensor,
    ops: Var,
    p: &GatVars,
    slope: f64,
    eps: f64,
) -> Result<Var> {
    let (q, k, v) = match p.proj {
        ProjVars::Shared { w_p } => {
            let h = tape.matmul(x, w_p)?;
            (h, h, h)
        }
        ProjVars::Kqv { w_q, w_k, w_v } => (tape.matmul(x, w_q)?, tape.matmul(x, w_k)?, tape.matmul(x, w_v)?),
    };
    let n = tape.value(x).rows();
    let s_src = tape.matmul(q, p.a_src)?;
    let s_dst = tape.matmul(k, p.a_dst)?;
    let rows = tape.broadcast(s_src, n, n)?;
    let cols_t = tape.broadcast(s_dst, n, n)?;
    let cols = tape.transpose(cols_t);
    let raw = tape.add(rows, cols)?;
    let e = tape.leaky_relu(raw, slope);
    let attn = match p.proj {
        ProjVars::Shared { .. } => {
            let s = tape.sigmoid(e);
            let m = tape.constant(mask.clone());
            tape.mul(s, m)?
        }
        ProjVars::Kqv { .. } => tape.masked_softmax(e, mask)?,
    };
    let msg = tape.matmul(attn, v)?;
    let gate_in = tape.matmul(ops, p.w_o)?;
    let gate = tape.sigmoid(gate_in);
    let gated = tape.mul(gate, msg)?;
    let normed = tape.layer_norm(gated, Axis::Cols, eps);
    let (r, c) = tape.value(normed).dims2()?;
    let g = tape.broadcast(p.gamma, r, c)?;
    let scaled = tape.mul(normed, g)?;
    tape.add_row(scaled, p.beta)
}
