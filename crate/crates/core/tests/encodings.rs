use std::collections::BTreeSet;

use flan::benchmark::{count_cells, generate_synthetic, SyntheticSpec};
use flan::cellgraph::{CellArch, CellGraph, OpVocabulary, NUM_RESERVED_OPS};
use flan::encodings::{encode_adjacency, encode_path, score_features_raw, unify};
use proptest::prelude::*;

fn whole_space(n: usize, v: usize) -> flan::benchmark::TabularBenchmark {
    let archs = count_cells(n, v) as usize;
    generate_synthetic(&SyntheticSpec::with_random_utilities(n, v, archs, 3, 0.0, 0.0)).unwrap()
}

/// Recursive DFS, independent of the library's path walker.
fn oracle_paths(cell: &CellGraph) -> BTreeSet<Vec<usize>> {
    fn walk(cell: &CellGraph, node: usize, seq: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        let n = cell.num_nodes();
        if cell.op(node) == flan::cellgraph::OP_OUTPUT {
            out.insert(seq.clone());
            return;
        }
        for next in 0..n {
            if cell.has_edge(node, next) {
                let op = cell.op(next);
                let pushed = op >= NUM_RESERVED_OPS;
                if pushed {
                    seq.push(op - NUM_RESERVED_OPS);
                }
                walk(cell, next, seq, out);
                if pushed {
                    seq.pop();
                }
            }
        }
    }
    let input = (0..cell.num_nodes()).find(|&i| cell.op(i) == flan::cellgraph::OP_INPUT).unwrap();
    let mut out = BTreeSet::new();
    walk(cell, input, &mut Vec::new(), &mut out);
    out
}

/// Every op sequence up to `max_len`, in (length, lexicographic) order.
fn all_sequences(choices: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &layer {
            for c in 0..choices {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

#[test]
fn path_bits_match_dfs_oracle_on_every_small_cell() {
    let mut checked = 0;
    for n in 3..=5 {
        let bench = whole_space(n, 3);
        let seqs = all_sequences(3, n - 2);
        for arch in bench.archs() {
            let bits = encode_path(arch, &bench.vocab, usize::MAX).values;
            assert_eq!(bits.len(), seqs.len());
            let expect = oracle_paths(&arch.cells[0]);
            let got: BTreeSet<Vec<usize>> =
                seqs.iter().zip(&bits).filter(|(_, &b)| b == 1.0).map(|(s, _)| s.clone()).collect();
            assert_eq!(got, expect, "arch {}", arch.arch_id);
            checked += 1;
        }
    }
    assert_eq!(checked, 7 + 103 + 3583);
}

#[test]
fn adding_an_edge_never_lowers_path_count() {
    let bench = whole_space(5, 1);
    for arch in bench.archs() {
        let cell = &arch.cells[0];
        let base = score_features_raw(arch, &bench.vocab)[4];
        for i in 0..5 {
            for j in i + 1..5 {
                if cell.has_edge(i, j) || cell.is_pruned(i) || cell.is_pruned(j) {
                    continue;
                }
                let mut edges: Vec<(usize, usize)> = cell.edges().collect();
                edges.push((i, j));
                let bigger = CellGraph::from_edges(5, &edges, cell.op_ids().to_vec(), 0).unwrap();
                let f = score_features_raw(&CellArch::single(0, bigger), &bench.vocab);
                assert!(f[4] >= base);
            }
        }
    }
}

#[test]
fn adjacency_changes_under_nontrivial_permutation() {
    let v = OpVocabulary::with_ops(0, &["a", "b"]).unwrap();
    let cell = CellGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], vec![0, 3, 4, 1], 0).unwrap();
    let arch = CellArch::single(0, cell);
    // swapping the two middle nodes keeps the order upper-triangular only
    // after relabelling ops, so the encoding must differ
    let p = arch.permute(&[0, 2, 1, 3]).unwrap();
    let a = encode_adjacency(&arch, &v, 4);
    let b = encode_adjacency(&p, &v, 4);
    assert!(a.is_ok());
    assert!(b.is_err() || a.unwrap() != b.unwrap());
    let q = arch.permute(&[0, 1, 2, 3]).unwrap();
    assert_eq!(encode_adjacency(&q, &v, 4).unwrap(), encode_adjacency(&arch, &v, 4).unwrap());
}

#[test]
fn unify_is_injective_for_five_spaces_of_ten_ops() {
    let names: Vec<String> = (0..10).map(|k| format!("op{k}")).collect();
    let vocabs: Vec<OpVocabulary> = (0..5).map(|s| OpVocabulary::with_ops(s, &names).unwrap()).collect();
    let u = unify(&vocabs).unwrap();
    assert_eq!(u.size(), 3 + 50);
    let mut seen = BTreeSet::new();
    for s in 0..5 {
        for local in 0..13 {
            let id = u.unified_id(s, local).unwrap();
            if local < NUM_RESERVED_OPS {
                assert_eq!(id, local);
            } else {
                assert!(seen.insert(id), "collision at space {s} op {local}");
                assert!(id >= NUM_RESERVED_OPS && id < u.size());
            }
        }
    }
    assert_eq!(seen.len(), 50);
}

fn cells_of_size(n: usize) -> flan::benchmark::TabularBenchmark {
    {
    let archs = (count_cells(n, 3) as usize).min(64);
    generate_synthetic(&SyntheticSpec::with_random_utilities(n, 3, archs, 11 + n as u64, 0.0, 0.0)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_and_score_are_permutation_invariant(
        n in 3usize..=6,
        pick in 0usize..64,
        perm in Just(()).prop_perturb(|_, mut rng| {
            let mut p: Vec<usize> = (0..6).collect();
            for i in (1..6).rev() {
                let j = (rng.next_u32() as usize) % (i + 1);
                p.swap(i, j);
            }
            p
        }),
    ) {
        let bench = cells_of_size(n);
        let arch = &bench.archs()[pick % bench.len()];
        let perm: Vec<usize> = perm.into_iter().filter(|&p| p < n).collect();
        let moved = arch.permute(&perm).unwrap();
        prop_assert_eq!(encode_path(arch, &bench.vocab, usize::MAX), encode_path(&moved, &bench.vocab, usize::MAX));
        prop_assert_eq!(score_features_raw(arch, &bench.vocab), score_features_raw(&moved, &bench.vocab));
    }
}
