//! Property-based tests of the library's cross-cutting invariants:
//! cleanup idempotence, permutation-repair totality, search/brute-force
//! equivalence, orchestrator exactness under an oracle, metric ranges,
//! round-trip losslessness, and divergence symmetry.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use driftrank::bm25::{bm25_score, build_index, search, term_score, BM25Params};
use driftrank::dense::{dot_rescore, EmbeddingStore, EmbeddingVector};
use driftrank::ranking::{extend_below, next_score_below, RankedList};
use driftrank::rerank::{
    parse_permutation, sliding_window_rerank, tournament_rerank, DocRef, ListwiseScorer,
    Permutation, SlidingWindowConfig, TournamentConfig,
};
use driftrank::shift::jsd_aligned;
use driftrank::textcorpus::{
    clean_text, is_clean, tokenize, AnalyzerConfig, Corpus, Document, Query, STOPWORDS,
};
use driftrank::treceval::{
    map_at_k, ndcg_at_k, precision_at_k, read_trec_run, recall_at_k, write_trec_run, QrelSet,
};
use driftrank::{Result, Score};

// ---------------------------------------------------------------------------
// strategies

/// Text mixing ordinary words with markup, URLs, contacts, Unicode, and
/// control characters.
fn adversarial_text() -> impl Strategy<Value = String> {
    let fragment = prop_oneof![
        "[a-z]{1,8}( [a-z]{1,8}){0,5}",
        Just("<div class=\"x\">inner</div>".to_string()),
        Just("https://deep.example.com/a/b?c=d".to_string()),
        Just("www.example.org/path".to_string()),
        Just("person@mail.example.com".to_string()),
        Just("(555) 123-4567".to_string()),
        Just("caf\u{e9} stra\u{df}e \u{201c}x\u{201d}".to_string()),
        Just("tab\tand\u{b}ctrl".to_string()),
        Just("line\nbreak\r\n".to_string()),
        Just("<b>un<closed".to_string()),
    ];
    proptest::collection::vec(fragment, 0..6).prop_map(|parts| parts.join(" "))
}

fn doc_word(i: usize) -> String {
    format!("w{i:02}")
}

/// A corpus of `n` documents over a small shared vocabulary, so postings
/// overlap heavily.
fn small_corpus(n: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec(proptest::collection::vec(0..30usize, 1..12), n..n + 1)
}

fn build_from_words(docs: &[Vec<usize>]) -> Corpus {
    let documents = docs
        .iter()
        .enumerate()
        .map(|(i, words)| {
            let text = words.iter().map(|&w| doc_word(w)).collect::<Vec<_>>().join(" ");
            Document::new(format!("doc{i:03}"), text)
        })
        .collect();
    Corpus::new("<property>", documents).unwrap()
}

/// A scorer with a planted total order: lower planted rank = better.
/// Permutation-invariant by construction (keyed on text, not position).
struct PlantedScorer {
    rank_of: BTreeMap<String, usize>,
}

impl PlantedScorer {
    fn new(order: &[String]) -> Self {
        PlantedScorer {
            rank_of: order
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i))
                .collect(),
        }
    }
}

impl ListwiseScorer for PlantedScorer {
    fn rank(&self, _query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let mut idx: Vec<usize> = (1..=window.len()).collect();
        idx.sort_by_key(|&i| self.rank_of[window[i - 1].text]);
        Permutation::repair(&idx, window.len())
    }

    fn label(&self) -> String {
        "planted".to_string()
    }
}

/// Candidates doc000..doc{n-1} with text equal to id and descending scores.
fn candidate_list(n: usize) -> (RankedList, HashMap<String, String>) {
    let scores: Vec<(String, Score)> = (0..n)
        .map(|i| (format!("doc{i:03}"), (n - i) as Score))
        .collect();
    let texts = scores
        .iter()
        .map(|(id, _)| (id.clone(), id.clone()))
        .collect();
    (RankedList::from_sorted("q1", scores).unwrap(), texts)
}

// ---------------------------------------------------------------------------
// cleanup

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clean_is_idempotent(raw in adversarial_text()) {
        let once = clean_text(&raw);
        prop_assert_eq!(clean_text(&once), once.clone());
    }

    #[test]
    fn clean_output_is_pure(raw in adversarial_text()) {
        prop_assert!(is_clean(&clean_text(&raw)));
    }

    #[test]
    fn clean_output_is_printable_ascii_single_spaced(raw in adversarial_text()) {
        let cleaned = clean_text(&raw);
        prop_assert!(cleaned.chars().all(|c| (' '..='~').contains(&c)));
        prop_assert!(!cleaned.contains("  "));
        prop_assert_eq!(cleaned.trim(), &cleaned);
    }
}

// ---------------------------------------------------------------------------
// analyzer

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn analyzer_respects_its_flags(raw in adversarial_text(), cap in 1..20usize) {
        let cfg = AnalyzerConfig {
            lowercase: true,
            ascii_fold: true,
            stem: false,
            stopwords: true,
            max_tokens: Some(cap),
        };
        let tokens = tokenize(&raw, &cfg);
        prop_assert!(tokens.len() <= cap);
        for t in &tokens {
            prop_assert_eq!(t.to_lowercase(), t.clone());
            prop_assert!(!STOPWORDS.contains(&t.as_str()), "stopword survived: {}", t);
        }
    }
}

// ---------------------------------------------------------------------------
// permutation repair

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn repair_always_yields_a_valid_permutation(
        indices in proptest::collection::vec(0..40usize, 1..60),
        n in 1..25usize,
    ) {
        let perm = Permutation::repair(&indices, n).unwrap();
        let order = perm.order();
        prop_assert_eq!(order.len(), n);
        let seen: BTreeSet<usize> = order.iter().copied().collect();
        prop_assert_eq!(seen.len(), n);
        prop_assert!(order.iter().all(|&i| (1..=n).contains(&i)));

        // First occurrences of in-range indices are preserved, in order.
        let mut expected = Vec::new();
        let mut taken = BTreeSet::new();
        for &i in &indices {
            if (1..=n).contains(&i) && taken.insert(i) {
                expected.push(i);
            }
        }
        prop_assert_eq!(&order[..expected.len()], &expected[..]);
        // And what was never mentioned follows in ascending order.
        let tail = &order[expected.len()..];
        prop_assert!(tail.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parse_tolerates_arbitrary_junk_around_indices(
        junk_before in "[^\\[\\]0-9]{0,20}",
        junk_after in "[^\\[\\]0-9]{0,20}",
        indices in proptest::collection::vec(1..10usize, 1..12),
    ) {
        let n = 9;
        let raw = format!(
            "{junk_before}{}{junk_after}",
            indices
                .iter()
                .map(|i| format!("[{i}]"))
                .collect::<Vec<_>>()
                .join(" > ")
        );
        let perm = parse_permutation(&raw, n).unwrap();
        prop_assert_eq!(perm.order().len(), n);
    }
}

// ---------------------------------------------------------------------------
// bm25

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn search_equals_brute_force_scoring(
        docs in small_corpus(40),
        query_words in proptest::collection::vec(0..30usize, 1..5),
        k in prop_oneof![Just(1usize), Just(3), Just(10), Just(40), Just(100)],
    ) {
        let corpus = build_from_words(&docs);
        let cfg = AnalyzerConfig { stem: false, ..AnalyzerConfig::default() };
        let index = build_index(&corpus, &cfg).unwrap();
        let params = BM25Params::default();
        let query_text = query_words.iter().map(|&w| doc_word(w)).collect::<Vec<_>>().join(" ");
        let query = Query::new("q1", &query_text);

        let fast = search(&index, &params, &query, k);

        // Brute force: score every document; keep positives; sort by the
        // tie rule. Terms are folded and walked in sorted order exactly as
        // the search path does, so scores must match bit for bit.
        let mut folded: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokenize(&query_text, &cfg) {
            *folded.entry(t).or_insert(0) += 1;
        }
        let mut scored: Vec<(String, Score)> = Vec::new();
        for doc in corpus.iter() {
            let mut score = 0.0;
            for (term, &count) in &folded {
                let tf = index.term_frequency(term, &doc.id) as Score;
                let df = index.df(term);
                if df > 0 && tf > 0.0 {
                    score += term_score::<Score>(
                        tf,
                        df,
                        index.doc_count(),
                        index.doc_length(&doc.id).unwrap() as Score,
                        index.avg_doc_length(),
                        params.k1,
                        params.b,
                    ) * count as Score;
                }
            }
            if score > 0.0 {
                scored.push((doc.id.clone(), score));
            }
        }
        let brute = RankedList::from_scores("q1", scored).unwrap().truncated(k);

        prop_assert_eq!(fast.entries.len(), brute.entries.len());
        for (f, b) in fast.entries.iter().zip(&brute.entries) {
            prop_assert_eq!(&f.doc_id, &b.doc_id);
            prop_assert_eq!(f.score.to_bits(), b.score.to_bits(),
                "score mismatch on {}: {} vs {}", f.doc_id, f.score, b.score);
        }
    }

    #[test]
    fn search_scores_non_increasing_with_doc_id_tiebreak(
        docs in small_corpus(30),
        query_words in proptest::collection::vec(0..30usize, 1..4),
    ) {
        let corpus = build_from_words(&docs);
        let cfg = AnalyzerConfig { stem: false, ..AnalyzerConfig::default() };
        let index = build_index(&corpus, &cfg).unwrap();
        let query_text = query_words.iter().map(|&w| doc_word(w)).collect::<Vec<_>>().join(" ");
        let list = search(&index, &BM25Params::default(), &Query::new("q1", &query_text), 100);
        for pair in list.entries.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
            if pair[0].score == pair[1].score {
                prop_assert!(pair[0].doc_id < pair[1].doc_id);
            }
        }
        // Every scored document shares at least one query term.
        prop_assert!(list.entries.iter().all(|e| e.score > 0.0));
    }

    #[test]
    fn pairwise_bm25_score_agrees_with_search(
        docs in small_corpus(20),
        query_words in proptest::collection::vec(0..30usize, 1..4),
    ) {
        let corpus = build_from_words(&docs);
        let cfg = AnalyzerConfig { stem: false, ..AnalyzerConfig::default() };
        let index = build_index(&corpus, &cfg).unwrap();
        let params = BM25Params::default();
        let query_text = query_words.iter().map(|&w| doc_word(w)).collect::<Vec<_>>().join(" ");
        let terms = tokenize(&query_text, &cfg);
        let list = search(&index, &params, &Query::new("q1", &query_text), 100);
        for entry in &list.entries {
            let pair = bm25_score(&index, &params, &terms, &entry.doc_id);
            prop_assert!((pair - entry.score).abs() <= 1e-9 * entry.score.abs().max(1.0));
        }
    }
}

// ---------------------------------------------------------------------------
// ranking lists

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn strictify_preserves_order_and_decreases(
        raw in proptest::collection::vec(0..50u32, 1..40),
    ) {
        let mut sorted: Vec<Score> = raw.iter().map(|&v| v as Score).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let scores: Vec<(String, Score)> = sorted
            .iter()
            .enumerate()
            .map(|(i, &s)| (format!("d{i:03}"), s))
            .collect();
        let mut list = RankedList::from_sorted("q", scores.clone()).unwrap();
        list.strictify_scores();
        let ids: Vec<&str> = list.doc_ids().collect();
        let expected: Vec<&str> = scores.iter().map(|(d, _)| d.as_str()).collect();
        prop_assert_eq!(ids, expected);
        for pair in list.entries.windows(2) {
            prop_assert!(pair[0].score > pair[1].score);
        }
    }

    #[test]
    fn extend_below_chains_strictly_below(
        head_n in 0..10usize,
        tail_n in 1..20usize,
        start in -100.0..100.0f64,
    ) {
        let mut head: Vec<(String, Score)> = (0..head_n)
            .map(|i| (format!("h{i}"), start + (head_n - i) as Score))
            .collect();
        let floor = head.last().map(|(_, s)| *s).unwrap_or(start);
        extend_below(&mut head, (0..tail_n).map(|i| format!("t{i}")), start);
        prop_assert_eq!(head.len(), head_n + tail_n);
        for pair in head[head_n.saturating_sub(1)..].windows(2) {
            prop_assert!(pair[0].1 > pair[1].1);
        }
        prop_assert!(head[head_n].1 < floor || head_n == 0);
        // next_score_below is strict even for huge magnitudes.
        prop_assert!(next_score_below(start) < start);
    }
}

// ---------------------------------------------------------------------------
// orchestrators under a planted oracle

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tournament_reproduces_planted_top_k(
        n in 2..80usize,
        seed in 0..1000u64,
        top_k in 1..10usize,
    ) {
        let (candidates, texts) = candidate_list(n);
        let order = shuffled_ids(n, seed);
        let scorer = PlantedScorer::new(&order);
        let cfg = TournamentConfig { match_size: 5, promote: 2, top_k };
        let out = tournament_rerank(&scorer, &Query::new("q1", "q"), &candidates, &texts, &cfg)
            .unwrap();
        let want: Vec<&str> = order.iter().take(top_k.min(n)).map(String::as_str).collect();
        let got: Vec<&str> = out.doc_ids().take(top_k.min(n)).collect();
        prop_assert_eq!(got, want);
        // Conservation: output is a permutation of the input.
        let input_set: BTreeSet<&str> = candidates.doc_ids().collect();
        let output_set: BTreeSet<&str> = out.doc_ids().collect();
        prop_assert_eq!(input_set, output_set);
    }

    #[test]
    fn one_pass_window_reproduces_planted_top_ten(
        n in 2..120usize,
        seed in 0..1000u64,
    ) {
        let (candidates, texts) = candidate_list(n);
        let order = shuffled_ids(n, seed);
        let scorer = PlantedScorer::new(&order);
        let cfg = SlidingWindowConfig { window: 20, stride: 10, passes: 1 };
        let out = sliding_window_rerank(&scorer, &Query::new("q1", "q"), &candidates, &texts, &cfg)
            .unwrap();
        let depth = 10.min(n);
        let want: Vec<&str> = order.iter().take(depth).map(String::as_str).collect();
        let got: Vec<&str> = out.doc_ids().take(depth).collect();
        prop_assert_eq!(got, want);
        let input_set: BTreeSet<&str> = candidates.doc_ids().collect();
        let output_set: BTreeSet<&str> = out.doc_ids().collect();
        prop_assert_eq!(input_set, output_set);
    }
}

/// Deterministic shuffle of doc ids via a keyed hash — the planted truth.
fn shuffled_ids(n: usize, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = (0..n).map(|i| format!("doc{i:03}")).collect();
    ids.sort_by_key(|id| driftrank::providers::stable_hash(seed, &[id.as_bytes()]));
    ids
}

// ---------------------------------------------------------------------------
// dense rescoring

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dot_rescore_is_permutation_invariant(
        n in 1..30usize,
        seed in 0..500u64,
        rot in 0..30usize,
    ) {
        let dim = 8;
        let vec_for = |label: &str| -> Vec<f64> {
            (0..dim)
                .map(|j| {
                    let h = driftrank::providers::stable_hash(
                        seed,
                        &[label.as_bytes(), &(j as u64).to_le_bytes()],
                    );
                    (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect()
        };
        let mut store = EmbeddingStore::new(dim, "prop").unwrap();
        for i in 0..n {
            let id = format!("doc{i:03}");
            store.insert(&id, EmbeddingVector::new(vec_for(&id)).unwrap()).unwrap();
        }
        let query_vec = EmbeddingVector::new(vec_for("query")).unwrap();

        let (candidates, _) = candidate_list(n);
        let baseline = dot_rescore(&query_vec, &candidates, &store, n).unwrap();

        // Rotate the candidate order and rescore: same result.
        let mut rotated_ids: Vec<String> = candidates.doc_ids().map(String::from).collect();
        rotated_ids.rotate_left(rot % n);
        let rotated = RankedList::from_sorted(
            "q1",
            rotated_ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), (n - i) as Score))
                .collect(),
        )
        .unwrap();
        let again = dot_rescore(&query_vec, &rotated, &store, n).unwrap();

        let a: Vec<&str> = baseline.doc_ids().collect();
        let b: Vec<&str> = again.doc_ids().collect();
        prop_assert_eq!(a, b);
    }
}

// ---------------------------------------------------------------------------
// metrics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metric_values_stay_in_range_and_recall_is_monotone(
        n_docs in 1..40usize,
        judged in proptest::collection::vec((0..40usize, 0..4u32), 1..30),
    ) {
        let mut qrels = QrelSet::new();
        let mut any_positive = false;
        let mut inserted = BTreeSet::new();
        for (doc, grade) in judged {
            if inserted.insert(doc) {
                qrels.insert("q1", format!("d{doc:03}"), grade).unwrap();
                any_positive |= grade > 0;
            }
        }
        prop_assume!(any_positive);

        let run = RankedList::from_sorted(
            "q1",
            (0..n_docs).map(|i| (format!("d{i:03}"), (n_docs - i) as Score)).collect(),
        ).unwrap();

        let mut prev_recall = 0.0;
        for k in [1usize, 3, 5, 10, 100] {
            let ndcg = ndcg_at_k(&run, &qrels, k).unwrap();
            let map = map_at_k(&run, &qrels, k).unwrap();
            let p = precision_at_k(&run, &qrels, k).unwrap();
            let r = recall_at_k(&run, &qrels, k).unwrap();
            for v in [ndcg, map, p, r] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "out of range: {v}");
            }
            prop_assert!(r >= prev_recall - 1e-12, "recall decreased at k={k}");
            prev_recall = r;
        }
    }

    #[test]
    fn ideal_ordering_has_ndcg_one(
        grades in proptest::collection::vec(1..4u32, 1..20),
    ) {
        let mut qrels = QrelSet::new();
        let mut sorted = grades.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        for (i, &g) in sorted.iter().enumerate() {
            qrels.insert("q1", format!("d{i:03}"), g).unwrap();
        }
        // The run lists docs in ideal (grade-descending) order.
        let run = RankedList::from_sorted(
            "q1",
            (0..sorted.len()).map(|i| (format!("d{i:03}"), (sorted.len() - i) as Score)).collect(),
        ).unwrap();
        for k in [1usize, 5, 10, 100] {
            let ndcg = ndcg_at_k(&run, &qrels, k).unwrap();
            prop_assert!((ndcg - 1.0).abs() < 1e-12, "ndcg@{k} = {ndcg}");
        }
    }
}

// ---------------------------------------------------------------------------
// round trips

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trec_run_round_trips_losslessly(
        queries in proptest::collection::vec(
            proptest::collection::vec(0..200usize, 1..30),
            1..6,
        ),
    ) {
        let mut lists = Vec::new();
        for (qi, docs) in queries.iter().enumerate() {
            let mut seen = BTreeSet::new();
            let unique: Vec<usize> =
                docs.iter().copied().filter(|d| seen.insert(*d)).collect();
            let scores: Vec<(String, Score)> = unique
                .iter()
                .enumerate()
                .map(|(i, d)| (format!("d{d:03}"), 1000.0 - i as Score * 0.25))
                .collect();
            lists.push(RankedList::from_sorted(format!("q{qi}"), scores).unwrap());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.trec");
        write_trec_run(&lists, "prop", &path).unwrap();
        let back = read_trec_run(&path).unwrap();
        prop_assert_eq!(back, lists);
    }
}

// ---------------------------------------------------------------------------
// divergence

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn jsd_kernel_symmetric_bounded_zero_on_identity(
        raw_p in proptest::collection::vec(0.0..1.0f64, 2..40),
        raw_q in proptest::collection::vec(0.0..1.0f64, 2..40),
    ) {
        let n = raw_p.len().min(raw_q.len());
        let norm = |v: &[f64]| -> Vec<f64> {
            let s: f64 = v.iter().sum();
            if s == 0.0 {
                let u = 1.0 / v.len() as f64;
                vec![u; v.len()]
            } else {
                v.iter().map(|x| x / s).collect()
            }
        };
        let p = norm(&raw_p[..n]);
        let q = norm(&raw_q[..n]);

        let pq = jsd_aligned::<f64>(&p, &q);
        let qp = jsd_aligned::<f64>(&q, &p);
        prop_assert_eq!(pq.to_bits(), qp.to_bits(), "jsd not exactly symmetric");
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(jsd_aligned::<f64>(&p, &p) == 0.0);
    }
}
