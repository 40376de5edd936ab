//! Property tests for the pure invariants: chunk-span coverage, entropy
//! bounds, search exactness and prefix consistency, and metric ranges.

use std::collections::BTreeMap;

use proptest::prelude::*;

use techembed_core::corpus::{chunk_document, ChunkParams, Document};
use techembed_core::eval::{evaluate, JudgmentLevel, Qrels, RunFile};
use techembed_core::index::VectorIndex;
use techembed_core::querygen::{query_entropy, Provenance, SyntheticQuery};
use techembed_core::rng;
use techembed_core::tensor::l2_norm;
use techembed_core::tokenizer::split_surfaces;

fn doc_with_tokens(n: usize) -> Document {
    Document {
        doc_id: "d".into(),
        title: String::new(),
        text: (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        metadata: BTreeMap::new(),
    }
}

proptest! {
    #[test]
    fn chunk_spans_cover_every_token(
        tokens in 1usize..400,
        chunk_size in 8usize..64,
        overlap_frac in 0usize..8,
    ) {
        let overlap = overlap_frac * chunk_size / 8;
        prop_assume!(overlap < chunk_size);
        let doc = doc_with_tokens(tokens);
        let chunks = chunk_document(&doc, ChunkParams { chunk_size, overlap }).unwrap();
        let mut covered = 0usize;
        for c in &chunks {
            prop_assert!(c.token_start <= covered);
            prop_assert!(c.token_end - c.token_start <= chunk_size);
            covered = covered.max(c.token_end);
        }
        prop_assert_eq!(covered, tokens);
        // Overlap duplicates tokens, never drops them.
        let total: usize = chunks.iter().map(|c| c.token_end - c.token_start).sum();
        prop_assert!(total >= tokens);
    }

    #[test]
    fn entropy_is_bounded_by_log_token_count(words in proptest::collection::vec("[a-d]{1,2}", 1..20)) {
        let text = words.join(" ");
        let q = SyntheticQuery {
            query_id: "q".into(),
            text: text.clone(),
            source_chunk_id: "c".into(),
            provenance: Provenance::Template,
        };
        let n = split_surfaces(&text).len();
        prop_assume!(n > 0);
        let h = query_entropy(&q).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (n as f64).log2() + 1e-12);
    }

    #[test]
    fn search_equals_full_sort_oracle(seed in 0u64..500, k in 1usize..30) {
        let mut r = rng::substream(seed, &[0xbeef]);
        let dim = 8;
        let mut index = VectorIndex::new(dim, String::new());
        for i in 0..40 {
            let mut v: Vec<f64> = (0..dim).map(|_| rng::gaussian(&mut r)).collect();
            let n = l2_norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            index.push(format!("c{i:03}"), v).unwrap();
        }
        let mut q: Vec<f64> = (0..dim).map(|_| rng::gaussian(&mut r)).collect();
        let n = l2_norm(&q);
        q.iter_mut().for_each(|x| *x /= n);

        let got = index.search(&q, k).unwrap();
        // Oracle: full sort then truncate.
        let mut oracle: Vec<(String, f64)> = index
            .entries()
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        oracle.truncate(k);
        prop_assert_eq!(&got, &oracle);
        // Prefix consistency against the full ranking.
        let full = index.search(&q, index.len()).unwrap();
        prop_assert_eq!(&got[..], &full[..got.len()]);
        // No duplicates.
        let ids: std::collections::BTreeSet<&str> = got.iter().map(|(id, _)| id.as_str()).collect();
        prop_assert_eq!(ids.len(), got.len());
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in 0u64..300) {
        let mut r = rng::substream(seed, &[0x3141]);
        let n_queries = 1 + rng::index(&mut r, 8);
        let mut run = RunFile::new();
        let mut qmap = BTreeMap::new();
        for qi in 0..n_queries {
            let qid = format!("q{qi}");
            let n_ranked = 1 + rng::index(&mut r, 20);
            let ranked: Vec<(String, f64)> = (0..n_ranked)
                .map(|ri| (format!("t{}", rng::index(&mut r, 40)), 1.0 - ri as f64 * 0.01))
                .collect();
            // Deduplicate targets, keeping the first occurrence.
            let mut seen = std::collections::BTreeSet::new();
            let ranked: Vec<(String, f64)> = ranked
                .into_iter()
                .filter(|(t, _)| seen.insert(t.clone()))
                .collect();
            run.insert(&qid, ranked).unwrap();
            let n_rel = 1 + rng::index(&mut r, 5);
            let rel: std::collections::BTreeSet<String> =
                (0..n_rel).map(|_| format!("t{}", rng::index(&mut r, 40))).collect();
            qmap.insert(qid, rel);
        }
        let qrels = Qrels::new(qmap, JudgmentLevel::Chunk).unwrap();
        let ks = [1usize, 3, 10];
        let report = evaluate(&run, &qrels, &ks).unwrap();
        for v in [report.map, report.mrr]
            .into_iter()
            .chain(report.precision.values().copied())
            .chain(report.recall.values().copied())
        {
            prop_assert!((0.0..=1.0).contains(&v), "metric out of range: {}", v);
        }
        // Recall is non-decreasing in k for each query.
        for q in report.per_query.values() {
            let mut prev = 0.0;
            for k in ks {
                let r = q.recall[&k];
                prop_assert!(r + 1e-15 >= prev);
                prev = r;
            }
        }
    }
}
