//! Fixed-length architecture encodings and the cross-space operation index.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmark::{path_lengths, TabularBenchmark};
use crate::cellgraph::{CellArch, CellGraph, OpVocabulary, NUM_RESERVED_OPS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingKind {
    Adjacency,
    Path,
    Score,
    Supplemental,
}

impl EncodingKind {
    pub fn name(self) -> &'static str {
        match self {
            EncodingKind::Adjacency => "adjacency",
            EncodingKind::Path => "path",
            EncodingKind::Score => "score",
            EncodingKind::Supplemental => "supplemental",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingVector {
    pub kind: EncodingKind,
    pub values: Vec<f64>,
}

impl EncodingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per cell: the strictly upper-triangular adjacency bits in row-major
/// order, then a one-hot over the full vocabulary for every node.
pub fn encode_adjacency(arch: &CellArch, vocab: &OpVocabulary, num_nodes: usize) -> Result<EncodingVector> {
    let mut values = Vec::new();
    for cell in &arch.cells {
        if cell.num_nodes() != num_nodes {
            return Err(Error::invalid(format!(
                "cell has {} nodes, adjacency encoding expects {num_nodes} (pad first)",
                cell.num_nodes()
            )));
        }
        if !cell.is_upper_triangular() {
            return Err(Error::invalid("adjacency encoding needs an upper-triangular node order"));
        }
        for i in 0..num_nodes {
            for j in i + 1..num_nodes {
                values.push(if cell.has_edge(i, j) { 1.0 } else { 0.0 });
            }
        }
        for &op in cell.op_ids() {
            if op >= vocab.size() {
                return Err(Error::VocabularyMiss {
                    space_id: cell.space_id,
                    local_op: op,
                });
            }
            values.extend((0..vocab.size()).map(|k| if k == op { 1.0 } else { 0.0 }));
        }
    }
    Ok(EncodingVector {
        kind: EncodingKind::Adjacency,
        values,
    })
}

/// Number of distinct op sequences of length `0..=max_len` over `choices` ops.
pub fn path_space_size(choices: usize, max_len: usize) -> usize {
    (0..=max_len).map(|l| choices.pow(l as u32)).sum()
}

/// Position of an op sequence (ops given as 0-based choice indices) in the
/// order: shorter sequences first, then lexicographic.
pub fn path_position(sequence: &[usize], choices: usize) -> usize {
    let before: usize = (0..sequence.len()).map(|l| choices.pow(l as u32)).sum();
    let within = sequence.iter().fold(0, |acc, &s| acc * choices + s);
    before + within
}

/// Operation sequences (as choice indices) of every input-to-output path.
pub fn cell_path_sequences(cell: &CellGraph) -> Vec<Vec<usize>> {
    cell.io_paths()
        .into_iter()
        .map(|path| {
            path[1..path.len() - 1]
                .iter()
                .map(|&node| cell.op(node) - NUM_RESERVED_OPS)
                .collect()
        })
        .collect()
}

/// Binary indicator over all op-sequence paths up to the cell's maximum path
/// length, truncated to the first `max_paths` positions of the
/// (length, lexicographic) order. Cells are concatenated.
pub fn encode_path(arch: &CellArch, vocab: &OpVocabulary, max_paths: usize) -> EncodingVector {
    let choices = vocab.num_choices();
    let mut values = Vec::new();
    for cell in &arch.cells {
        let max_len = cell.num_nodes().saturating_sub(2);
        let dim = path_space_size(choices, max_len).min(max_paths);
        let mut bits = vec![0.0; dim];
        for seq in cell_path_sequences(cell) {
            let pos = path_position(&seq, choices);
            if pos < dim {
                bits[pos] = 1.0;
            }
        }
        values.extend(bits);
    }
    EncodingVector {
        kind: EncodingKind::Path,
        values,
    }
}

pub const SCORE_DIM: usize = 8;
pub const PATH_COUNT_CAP: f64 = 65536.0;

/// Rough parameter cost of one operation, keyed by its name.
pub fn op_cost(name: &str) -> f64 {
    let kernel = if name.contains("7x7") {
        49.0
    } else if name.contains("5x5") {
        25.0
    } else if name.contains("3x3") {
        9.0
    } else {
        1.0
    };
    if name.contains("pool") || name.contains("skip") || name.contains("identity") {
        0.0
    } else if name.contains("sep") || name.contains("dil") {
        kernel / 8.0 + 1.0
    } else {
        kernel
    }
}

fn cell_score_features(cell: &CellGraph, vocab: &OpVocabulary) -> [f64; SCORE_DIM] {
    let active = cell.num_active_nodes() as f64;
    let edges = cell.num_edges() as f64;
    let (shortest, longest) = path_lengths(cell).unwrap_or((0, 0));

    let mut counts = vec![0.0_f64; cell.num_nodes()];
    let paths = match (cell.topological_order(), cell.input_node(), cell.output_node()) {
        (Some(order), Some(input), Some(output)) => {
            counts[input] = 1.0;
            for &node in &order {
                let c = counts[node];
                for succ in cell.successors(node) {
                    counts[succ] = (counts[succ] + c).min(PATH_COUNT_CAP);
                }
            }
            counts[output]
        }
        _ => 0.0,
    };

    let op_names: Vec<&str> = cell
        .op_ids()
        .iter()
        .filter(|&&op| op >= NUM_RESERVED_OPS)
        .filter_map(|&op| vocab.name(op))
        .collect();
    let conv_fraction = if op_names.is_empty() {
        0.0
    } else {
        op_names.iter().filter(|n| n.contains("conv")).count() as f64 / op_names.len() as f64
    };
    let cost: f64 = op_names.iter().map(|n| op_cost(n)).sum();
    [
        active,
        edges,
        longest as f64,
        shortest as f64,
        paths,
        conv_fraction,
        if active > 0.0 { edges / active } else { 0.0 },
        cost,
    ]
}

/// The eight graph statistics, averaged over cells, before normalization:
/// active nodes, edges, longest and shortest input-output path, path count
/// (capped at 2^16), conv fraction, mean out-degree, parameter estimate.
pub fn score_features_raw(arch: &CellArch, vocab: &OpVocabulary) -> Vec<f64> {
    let mut out = vec![0.0; SCORE_DIM];
    for cell in &arch.cells {
        for (o, f) in out.iter_mut().zip(cell_score_features(cell, vocab)) {
            *o += f;
        }
    }
    let k = arch.cells.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

pub fn score_features(arch: &CellArch, vocab: &OpVocabulary) -> EncodingVector {
    EncodingVector {
        kind: EncodingKind::Score,
        values: score_features_raw(arch, vocab),
    }
}

/// Score features for every architecture, z-normalized per feature over the
/// benchmark. Constant features become zero.
pub fn score_matrix(bench: &TabularBenchmark) -> BTreeMap<u64, Vec<f64>> {
    let raw: BTreeMap<u64, Vec<f64>> = bench
        .archs()
        .iter()
        .map(|a| (a.arch_id, score_features_raw(a, &bench.vocab)))
        .collect();
    zscore_columns(&raw)
}

fn zscore_columns(rows: &BTreeMap<u64, Vec<f64>>) -> BTreeMap<u64, Vec<f64>> {
    let dim = rows.values().next().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in rows.values() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let mut std = vec![0.0; dim];
    for v in rows.values() {
        for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    std.iter_mut().for_each(|s| *s = s.sqrt());
    rows.iter()
        .map(|(&id, v)| {
            let z = v
                .iter()
                .zip(&mean)
                .zip(&std)
                .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
                .collect();
            (id, z)
        })
        .collect()
}

/// Global index of one (space, operation) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedOpIndex {
    pub space_id: u32,
    pub local_op_id: usize,
    pub unified_id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct RegisteredSpace {
    vocab: OpVocabulary,
    offset: usize,
}

/// Operation indexing shared across search spaces.
///
/// The reserved operations map to 0, 1, 2 in every space; each space's own
/// operations occupy a disjoint block `offset + local_id`. Giving every
/// (space, op) pair its own embedding-table row is the table-lookup form of
/// tagging each operation with its space index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedVocab {
    spaces: Vec<RegisteredSpace>,
    size: usize,
}

impl UnifiedVocab {
    /// Builds the index over `vocabs`, registering spaces by ascending id.
    pub fn unify(vocabs: &[OpVocabulary]) -> Result<Self> {
        let mut sorted: Vec<&OpVocabulary> = vocabs.iter().collect();
        sorted.sort_by_key(|v| v.space_id);
        if sorted.windows(2).any(|w| w[0].space_id == w[1].space_id) {
            return Err(Error::invalid("duplicate space_id in unify"));
        }
        let mut out = Self {
            spaces: Vec::new(),
            size: NUM_RESERVED_OPS,
        };
        for v in sorted {
            out.extend(v)?;
        }
        Ok(out)
    }

    /// Registers one more space after the existing ones, leaving every
    /// existing id unchanged. Returns how many new ids were added (zero if
    /// the space is already registered with the same vocabulary).
    pub fn extend(&mut self, vocab: &OpVocabulary) -> Result<usize> {
        if let Some(existing) = self.spaces.iter().find(|s| s.vocab.space_id == vocab.space_id) {
            if existing.vocab != *vocab {
                return Err(Error::invalid(format!(
                    "space {} is already registered with a different vocabulary",
                    vocab.space_id
                )));
            }
            return Ok(0);
        }
        // the block starts at offset + NUM_RESERVED_OPS for local id NUM_RESERVED_OPS
        let offset = self.size - NUM_RESERVED_OPS;
        self.spaces.push(RegisteredSpace {
            vocab: vocab.clone(),
            offset,
        });
        self.size += vocab.num_choices();
        Ok(vocab.num_choices())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, space_id: u32) -> bool {
        self.spaces.iter().any(|s| s.vocab.space_id == space_id)
    }

    pub fn vocabularies(&self) -> impl Iterator<Item = &OpVocabulary> {
        self.spaces.iter().map(|s| &s.vocab)
    }

    pub fn unified_id(&self, space_id: u32, local_op: usize) -> Result<usize> {
        let space = self
            .spaces
            .iter()
            .find(|s| s.vocab.space_id == space_id)
            .ok_or(Error::VocabularyMiss { space_id, local_op })?;
        if local_op >= space.vocab.size() {
            return Err(Error::VocabularyMiss { space_id, local_op });
        }
        Ok(if local_op < NUM_RESERVED_OPS {
            local_op
        } else {
            space.offset + local_op
        })
    }

    /// Every (space, op) mapping, spaces in registration order.
    pub fn entries(&self) -> Vec<UnifiedOpIndex> {
        self.spaces
            .iter()
            .flat_map(|s| {
                (0..s.vocab.size()).map(move |local| UnifiedOpIndex {
                    space_id: s.vocab.space_id,
                    local_op_id: local,
                    unified_id: if local < NUM_RESERVED_OPS { local } else { s.offset + local },
                })
            })
            .collect()
    }
}

pub fn unify(vocabs: &[OpVocabulary]) -> Result<UnifiedVocab> {
    UnifiedVocab::unify(vocabs)
}

pub const SUPP_FORMAT: &str = "flan-supp/1";

/// Per-architecture auxiliary vectors (zero-cost proxies, learned
/// embeddings, or any encoding above).
#[derive(Clone, Debug, PartialEq)]
pub struct SupplementalTable {
    pub kind: String,
    pub dim: usize,
    vectors: BTreeMap<u64, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SuppHeader {
    format: String,
    kind: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct SuppRecord {
    id: u64,
    v: Vec<f64>,
}

impl SupplementalTable {
    pub fn new(kind: impl Into<String>, vectors: BTreeMap<u64, Vec<f64>>) -> Result<Self> {
        let kind = kind.into();
        let dim = vectors.values().next().map_or(0, Vec::len);
        if let Some((id, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::invalid(format!(
                "table `{kind}`: arch {id} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        if vectors.values().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("table `{kind}`")));
        }
        Ok(Self { kind, dim, vectors })
    }

    /// The benchmark's proxy vectors as a `zcp` table.
    pub fn from_proxies(bench: &TabularBenchmark) -> Result<Self> {
        let proxies = bench
            .proxy_vectors()
            .ok_or_else(|| Error::invalid(format!("benchmark `{}` has no proxy vectors", bench.name)))?;
        Self::new("zcp", proxies.clone())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.vectors.keys().copied()
    }

    pub fn get(&self, arch_id: u64) -> Result<&[f64]> {
        self.vectors
            .get(&arch_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingVector {
                kind: self.kind.clone(),
                arch_id,
            })
    }

    /// Each column shifted and scaled to zero mean and unit variance.
    pub fn zscored(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            dim: self.dim,
            vectors: zscore_columns(&self.vectors),
        }
    }

    /// Stacks z-normalized tables in the given order (e.g. CATE, Arch2Vec,
    /// ZCP for the combined encoding). Every table must cover the same archs.
    pub fn concat(tables: &[SupplementalTable]) -> Result<Self> {
        let Some(first) = tables.first() else {
            return Err(Error::invalid("nothing to concatenate"));
        };
        let normalized: Vec<SupplementalTable> = tables.iter().map(Self::zscored).collect();
        let mut vectors = BTreeMap::new();
        for id in first.ids() {
            let mut row = Vec::new();
            for t in &normalized {
                row.extend_from_slice(t.get(id)?);
            }
            vectors.insert(id, row);
        }
        for t in tables {
            if let Some(extra) = t.ids().find(|id| !vectors.contains_key(id)) {
                return Err(Error::MissingVector {
                    kind: first.kind.clone(),
                    arch_id: extra,
                });
            }
        }
        let kind = tables.iter().map(|t| t.kind.as_str()).collect::<Vec<_>>().join("+");
        Self::new(kind, vectors)
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        serde_json::to_writer(
            &mut *w,
            &SuppHeader {
                format: SUPP_FORMAT.into(),
                kind: self.kind.clone(),
                dim: self.dim,
            },
        )?;
        writeln!(w)?;
        for (&id, v) in &self.vectors {
            serde_json::to_writer(&mut *w, &SuppRecord { id, v: v.clone() })?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Reads a `flan-supp/1` file. `kind`, when given, must match the header.
pub fn load_supplemental(path: impl AsRef<Path>, kind: Option<&str>) -> Result<SupplementalTable> {
    let path = path.as_ref();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut header: Option<SuppHeader> = None;
    let mut vectors = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(h) = &header else {
            let h: SuppHeader = serde_json::from_str(&line).map_err(|e| perr(lineno, format!("bad header: {e}")))?;
            if h.format != SUPP_FORMAT {
                return Err(perr(lineno, format!("unsupported format `{}`", h.format)));
            }
            if let Some(k) = kind {
                if k != h.kind {
                    return Err(perr(lineno, format!("expected kind `{k}`, file holds `{}`", h.kind)));
                }
            }
            header = Some(h);
            continue;
        };
        let rec: SuppRecord = serde_json::from_str(&line).map_err(|e| perr(lineno, format!("malformed record: {e}")))?;
        if rec.v.len() != h.dim {
            return Err(perr(lineno, format!("vector of dimension {}, header says {}", rec.v.len(), h.dim)));
        }
        if vectors.insert(rec.id, rec.v).is_some() {
            return Err(perr(lineno, format!("duplicate arch_id {}", rec.id)));
        }
    }
    let h = header.ok_or_else(|| perr(1, "missing header".into()))?;
    let mut table = SupplementalTable::new(h.kind, vectors)?;
    table.dim = h.dim;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellgraph::{OP_INPUT, OP_OUTPUT};

    fn vocab1() -> OpVocabulary {
        OpVocabulary::with_ops(0, &["op_a"]).unwrap()
    }

    fn chain() -> CellArch {
        CellArch::single(0, CellGraph::from_edges(3, &[(0, 1), (1, 2)], vec![OP_INPUT, 3, OP_OUTPUT], 0).unwrap())
    }

    #[test]
    fn adjacency_of_chain() {
        let e = encode_adjacency(&chain(), &vocab1(), 3).unwrap();
        let expect = [
            1.0, 0.0, 1.0, // edges (0,1) (0,2) (1,2)
            1.0, 0.0, 0.0, 0.0, // input
            0.0, 0.0, 0.0, 1.0, // op_a
            0.0, 1.0, 0.0, 0.0, // output
        ];
        assert_eq!(e.values, expect);
        assert_eq!(e.kind, EncodingKind::Adjacency);
    }

    #[test]
    fn adjacency_without_edges_and_two_cells() {
        let empty = CellArch::single(0, CellGraph::from_edges(3, &[], vec![OP_INPUT, 3, OP_OUTPUT], 0).unwrap());
        let e = encode_adjacency(&empty, &vocab1(), 3).unwrap();
        assert!(e.values[..3].iter().all(|&b| b == 0.0));
        let one = encode_adjacency(&chain(), &vocab1(), 3).unwrap();
        let two_cells = CellArch::new(0, vec![chain().cells[0].clone(), chain().cells[0].clone()]);
        let two = encode_adjacency(&two_cells, &vocab1(), 3).unwrap();
        assert_eq!(two.dim(), 2 * one.dim());
        assert!(encode_adjacency(&chain(), &vocab1(), 4).is_err());
    }

    #[test]
    fn single_path_bit() {
        let v = OpVocabulary::with_ops(0, &["op_a", "op_b"]).unwrap();
        let arch = CellArch::single(0, CellGraph::from_edges(3, &[(0, 1), (1, 2)], vec![OP_INPUT, 4, OP_OUTPUT], 0).unwrap());
        let e = encode_path(&arch, &v, 100);
        // order: [], [a], [b]
        assert_eq!(e.values, vec![0.0, 0.0, 1.0]);
        let direct = CellArch::single(
            0,
            CellGraph::from_edges(3, &[(0, 2)], vec![OP_INPUT, crate::cellgraph::OP_NONE, OP_OUTPUT], 0).unwrap(),
        );
        assert_eq!(encode_path(&direct, &v, 100).values, vec![1.0, 0.0, 0.0]);
        assert_eq!(encode_path(&direct, &v, 2).dim(), 2);
    }

    #[test]
    fn path_positions_are_ordered() {
        assert_eq!(path_position(&[], 3), 0);
        assert_eq!(path_position(&[0], 3), 1);
        assert_eq!(path_position(&[2], 3), 3);
        assert_eq!(path_position(&[0, 0], 3), 4);
        assert_eq!(path_position(&[2, 2], 3), 12);
        assert_eq!(path_space_size(3, 2), 13);
    }

    #[test]
    fn complete_dag_has_four_paths() {
        let v = OpVocabulary::with_ops(0, &["conv3x3"]).unwrap();
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let arch = CellArch::single(0, CellGraph::from_edges(4, &edges, vec![OP_INPUT, 3, 3, OP_OUTPUT], 0).unwrap());
        let f = score_features_raw(&arch, &v);
        assert_eq!(f[4], 4.0);
        assert_eq!((f[2], f[3]), (3.0, 1.0));
    }

    #[test]
    fn chain_path_lengths() {
        let f = score_features_raw(&chain(), &vocab1());
        assert_eq!((f[2], f[3]), (2.0, 2.0));
        assert_eq!(f[0], 3.0);
        assert_eq!(f[1], 2.0);
    }

    #[test]
    fn unify_counts_and_order() {
        let a = OpVocabulary::with_ops(1, &["x", "y"]).unwrap();
        let b = OpVocabulary::with_ops(2, &["x", "z"]).unwrap();
        let u1 = unify(&[a.clone(), b.clone()]).unwrap();
        let u2 = unify(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(u1, u2);
        assert_eq!(u1.size(), 7);
        assert_eq!(u1.unified_id(1, 0).unwrap(), 0);
        assert_eq!(u1.unified_id(2, 2).unwrap(), 2);
        assert_eq!(u1.unified_id(1, 3).unwrap(), 3);
        assert_eq!(u1.unified_id(2, 3).unwrap(), 5);
        assert!(u1.unified_id(3, 0).is_err());
        assert!(u1.unified_id(1, 5).is_err());
        assert!(unify(&[a.clone(), a.clone()]).is_err());

        let single = unify(&[OpVocabulary::with_ops(0, &["p", "q"]).unwrap()]).unwrap();
        let ids: Vec<usize> = single.entries().iter().map(|e| e.unified_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn extend_keeps_existing_ids() {
        let b = OpVocabulary::with_ops(5, &["x"]).unwrap();
        let a = OpVocabulary::with_ops(1, &["y", "z"]).unwrap();
        let mut u = unify(&[b.clone()]).unwrap();
        let before = u.unified_id(5, 3).unwrap();
        assert_eq!(u.extend(&a).unwrap(), 2);
        assert_eq!(u.unified_id(5, 3).unwrap(), before);
        assert_eq!(u.extend(&a).unwrap(), 0);
        assert_eq!(u.size(), 6);
    }

    #[test]
    fn supplemental_concat_and_lookup() {
        let mk = |kind: &str, dim: usize| {
            let v = (0..10u64)
                .map(|id| (id, (0..dim).map(|k| (id * 7 + k as u64) as f64 % 5.0).collect()))
                .collect();
            SupplementalTable::new(kind, v).unwrap()
        };
        let cate = mk("cate", 13);
        let a2v = mk("arch2vec", 32);
        let zcp = mk("zcp", 32);
        assert_eq!(a2v.get(3).unwrap().len(), 32);
        let caz = SupplementalTable::concat(&[cate, a2v, zcp]).unwrap();
        assert_eq!(caz.dim, 77);
        assert_eq!(caz.kind, "cate+arch2vec+zcp");
        assert!(matches!(caz.get(99), Err(Error::MissingVector { arch_id: 99, .. })));
    }

    #[test]
    fn supplemental_rejects_ragged_rows() {
        let mut v = BTreeMap::new();
        v.insert(0, vec![1.0, 2.0]);
        v.insert(1, vec![1.0]);
        assert!(SupplementalTable::new("x", v).is_err());
    }
}
