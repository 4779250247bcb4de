use hopforge_core::corpus::{generate_synthetic_corpus, ChainSpec};
use hopforge_core::retrieval::{union_contexts, Context, LexicalIndex, Retriever};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn search_matches_exhaustive_scoring() {
    let corpus = generate_synthetic_corpus(&ChainSpec { num_chains: 80, seed: 3, ..Default::default() }).unwrap();
    let index = LexicalIndex::new(&corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let words: Vec<&str> = corpus.documents().iter().flat_map(|d| d.text.split_whitespace()).collect();
    for _ in 0..20 {
        let n = rng.random_range(1..5);
        let query: Vec<&str> = (0..n).map(|_| *words.choose(&mut rng).unwrap()).collect();
        let query = query.join(" ");
        let k = rng.random_range(1..8);

        let mut all: Vec<(f64, &str)> =
            corpus.documents().iter().map(|d| (index.score(&query, d), d.id.as_str())).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let got = index.retrieve(&query, k).unwrap();
        assert_eq!(got.entries.len(), k);
        for (e, (score, id)) in got.entries.iter().zip(&all) {
            assert_eq!(e.doc_id, *id, "query `{query}`");
            assert!((e.score - score).abs() < 1e-12);
        }
    }
}

#[test]
fn contexts_grow_monotonically_across_hops() {
    let corpus = generate_synthetic_corpus(&ChainSpec { num_chains: 40, seed: 8, ..Default::default() }).unwrap();
    let index = LexicalIndex::new(&corpus);
    for q in corpus.questions().iter().take(10) {
        let mut ctx = Context::new();
        for hop in 1..=3 {
            let docs = index.retrieve(&q.text, 3).unwrap();
            let next = union_contexts(&ctx, &docs, hop);
            assert!(next.len() >= ctx.len());
            assert!(next.len() <= ctx.len() + 3);
            ctx = next;
        }
    }
}
