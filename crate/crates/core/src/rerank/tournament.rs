//! Tournament-sort listwise reranking with match-result caching.
//!
//! Candidates seed a fixed bracket: contiguous chunks of the input order
//! form leaf matches of up to `match_size` documents; each match's top
//! `promote` members stream upward, the stream again chunked into matches,
//! until a single root match decides the winner. Every match is one
//! listwise call whose result is cached.
//!
//! Extraction of subsequent ranks exploits the cache: removing the current
//! winner only disturbs the matches it occupied — one per level on its
//! leaf-to-root path. Each of those is re-run over its survivors, with the
//! vacated promotion slot refilled by the feeding child's best cached
//! survivor not already promoted; all other match results are reused
//! untouched. With a self-consistent scorer this yields the exact scorer
//! top-k at a fraction of the calls a from-scratch re-sort would need.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::ranking::RankedList;
use crate::rerank::{DocRef, DocTexts, ListwiseScorer};
use crate::textcorpus::Query;
use crate::{Error, Result, Score};

/// Tournament geometry. `1 ≤ promote < match_size`; `top_k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TournamentConfig {
    pub match_size: usize,
    pub promote: usize,
    pub top_k: usize,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            match_size: 5,
            promote: 2,
            top_k: 10,
        }
    }
}

impl TournamentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.promote == 0 || self.promote >= self.match_size {
            return Err(Error::Config(format!(
                "tournament requires 1 <= promote < match_size, got promote {} match_size {}",
                self.promote, self.match_size
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("tournament requires top_k >= 1".to_string()));
        }
        Ok(())
    }
}

/// Where a match slot's occupant comes from: a fixed candidate (leaf
/// matches) or a feeder match one level down.
#[derive(Debug, Clone, Copy)]
enum Origin {
    Item(usize),
    Child { child: usize, pos: usize },
}

struct MatchNode {
    origins: Vec<Origin>,
    /// Current occupant of each slot; `None` once the feeding child is
    /// exhausted (or, for leaves, the item extracted).
    occupants: Vec<Option<usize>>,
    /// Cached scorer result over the live occupants, best first.
    ranking: Vec<usize>,
    /// Members currently promoted into a parent slot (they occupy both
    /// levels; refill must skip them).
    promoted_out: HashSet<usize>,
}

impl MatchNode {
    fn new(origins: Vec<Origin>) -> Self {
        let slots = origins.len();
        MatchNode {
            origins,
            occupants: vec![None; slots],
            ranking: Vec::new(),
            promoted_out: HashSet::new(),
        }
    }
}

/// Build the bracket for `n` items. Matches are returned bottom-up (every
/// match's children precede it); the last match is the root.
fn build_bracket(n: usize, cfg: &TournamentConfig) -> Vec<MatchNode> {
    let m = cfg.match_size;
    let mut matches: Vec<MatchNode> = Vec::new();
    let mut level: Vec<usize> = Vec::new();
    let items: Vec<usize> = (0..n).collect();
    for chunk in items.chunks(m) {
        level.push(matches.len());
        matches.push(MatchNode::new(chunk.iter().map(|&i| Origin::Item(i)).collect()));
    }
    while level.len() > 1 {
        let stream: Vec<(usize, usize)> = level
            .iter()
            .flat_map(|&mid| {
                let promoted = cfg.promote.min(matches[mid].origins.len());
                (0..promoted).map(move |pos| (mid, pos))
            })
            .collect();
        let mut next_level = Vec::new();
        for chunk in stream.chunks(m) {
            next_level.push(matches.len());
            matches.push(MatchNode::new(
                chunk
                    .iter()
                    .map(|&(child, pos)| Origin::Child { child, pos })
                    .collect(),
            ));
        }
        level = next_level;
    }
    matches
}

struct Session<'a> {
    matches: Vec<MatchNode>,
    root: usize,
    /// Per item, the slots it occupies, leaf first.
    chains: Vec<Vec<(usize, usize)>>,
    /// The last winner's vacated path, repaired lazily on the next
    /// extraction — the final extraction then never pays for a repair
    /// nobody reads.
    pending: Option<Vec<(usize, usize)>>,
    refs: &'a [DocRef<'a>],
    scorer: &'a dyn ListwiseScorer,
    query: &'a Query,
}

impl<'a> Session<'a> {
    fn new(
        refs: &'a [DocRef<'a>],
        scorer: &'a dyn ListwiseScorer,
        query: &'a Query,
        cfg: &TournamentConfig,
    ) -> Self {
        let matches = build_bracket(refs.len(), cfg);
        let root = matches.len() - 1;
        let mut session = Session {
            matches,
            root,
            chains: vec![Vec::new(); refs.len()],
            pending: None,
            refs,
            scorer,
            query,
        };
        // Initial fill and evaluation, bottom-up. Construction order
        // guarantees children are ranked before any parent reads them.
        for mid in 0..session.matches.len() {
            for slot in 0..session.matches[mid].origins.len() {
                let item = match session.matches[mid].origins[slot] {
                    Origin::Item(i) => i,
                    Origin::Child { child, pos } => session.matches[child].ranking[pos],
                };
                session.matches[mid].occupants[slot] = Some(item);
                session.chains[item].push((mid, slot));
                if let Origin::Child { child, .. } = session.matches[mid].origins[slot] {
                    session.matches[child].promoted_out.insert(item);
                }
            }
            session.rank_match(mid);
        }
        session
    }

    /// (Re-)rank one match over its live occupants. One scorer call when
    /// two or more members are present; fewer resolve trivially. A scorer
    /// failure keeps the current slot order and is logged.
    fn rank_match(&mut self, mid: usize) {
        let live: Vec<usize> = self.matches[mid].occupants.iter().flatten().copied().collect();
        if live.len() <= 1 {
            self.matches[mid].ranking = live;
            return;
        }
        let window: Vec<DocRef<'_>> = live.iter().map(|&i| self.refs[i]).collect();
        self.matches[mid].ranking = match self.scorer.rank(self.query, &window) {
            Ok(perm) => perm.apply(&live),
            Err(e) => {
                log::warn!(
                    "query {:?}: tournament match resolved by current ordering; scorer {} failed: {e}",
                    self.query.id,
                    self.scorer.label()
                );
                live
            }
        };
    }

    /// Re-rank the matches on the previously extracted winner's path,
    /// bottom-up, refilling each vacated promotion slot with the feeding
    /// child's best cached survivor. At most one match per level is
    /// touched; everything else stays cached.
    fn repair_pending(&mut self) {
        let Some(chain) = self.pending.take() else {
            return;
        };
        for (step, &(mid, slot)) in chain.iter().enumerate() {
            if step > 0 {
                let child = match self.matches[mid].origins[slot] {
                    Origin::Child { child, .. } => child,
                    Origin::Item(_) => unreachable!("promoted occupancy has a child origin"),
                };
                let refill = self.matches[child]
                    .ranking
                    .iter()
                    .copied()
                    .find(|item| !self.matches[child].promoted_out.contains(item));
                if let Some(item) = refill {
                    self.matches[mid].occupants[slot] = Some(item);
                    self.matches[child].promoted_out.insert(item);
                    self.chains[item].push((mid, slot));
                }
            }
            self.rank_match(mid);
        }
    }

    /// Extract the current champion and queue its vacated path for repair.
    fn extract_next(&mut self) -> Option<usize> {
        self.repair_pending();
        let winner = *self.matches[self.root].ranking.first()?;
        let chain = std::mem::take(&mut self.chains[winner]);
        for &(mid, slot) in &chain {
            self.matches[mid].occupants[slot] = None;
        }
        self.pending = Some(chain);
        Some(winner)
    }
}

/// Rerank `candidates` by cached tournament sort, extracting the top
/// `cfg.top_k` in order; the unextracted remainder follows in its original
/// order. Output scores are synthesised as `n − position`.
pub fn tournament_rerank(
    scorer: &dyn ListwiseScorer,
    query: &Query,
    candidates: &RankedList,
    texts: &dyn DocTexts,
    cfg: &TournamentConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let n = candidates.len();
    let ids: Vec<&str> = candidates.doc_ids().collect();
    let texts_of: Vec<&str> = ids
        .iter()
        .map(|id| texts.text_of(id))
        .collect::<Result<_>>()?;
    let refs: Vec<DocRef<'_>> = ids
        .iter()
        .zip(&texts_of)
        .map(|(id, text)| DocRef { id, text })
        .collect();

    let mut session = Session::new(&refs, scorer, query, cfg);
    let mut extracted: Vec<usize> = Vec::with_capacity(cfg.top_k.min(n));
    while extracted.len() < cfg.top_k {
        match session.extract_next() {
            Some(item) => extracted.push(item),
            None => break,
        }
    }

    let taken: HashSet<usize> = extracted.iter().copied().collect();
    let mut order: Vec<String> = extracted.iter().map(|&i| ids[i].to_string()).collect();
    order.extend(
        (0..n)
            .filter(|i| !taken.contains(i))
            .map(|i| ids[i].to_string()),
    );

    RankedList::from_sorted(
        &candidates.query_id,
        order
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, (n - i) as Score))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::{CountingListwise, Permutation};
    use std::collections::HashMap;

    fn query() -> Query {
        Query {
            id: "q1".to_string(),
            text: "test".to_string(),
        }
    }

    struct GradeOracle(HashMap<String, i64>);
    impl ListwiseScorer for GradeOracle {
        fn rank(&self, _q: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
            let mut idx: Vec<usize> = (1..=window.len()).collect();
            idx.sort_by(|&a, &b| {
                let (da, db) = (window[a - 1], window[b - 1]);
                self.0[db.id]
                    .cmp(&self.0[da.id])
                    .then_with(|| da.id.cmp(db.id))
            });
            Permutation::repair(&idx, window.len())
        }
        fn label(&self) -> String {
            "grade-oracle".to_string()
        }
    }

    struct Failing;
    impl ListwiseScorer for Failing {
        fn rank(&self, _q: &Query, _w: &[DocRef<'_>]) -> Result<Permutation> {
            Err(Error::Protocol("down".to_string()))
        }
        fn label(&self) -> String {
            "failing".to_string()
        }
    }

    fn instance(n: usize, seed: u64) -> (RankedList, HashMap<String, String>, HashMap<String, i64>) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
        let mut grades: Vec<i64> = (0..n as i64).collect();
        grades.shuffle(&mut rng);
        let grade_map: HashMap<String, i64> =
            ids.iter().cloned().zip(grades.iter().copied()).collect();
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        let list = RankedList::from_sorted(
            "q1",
            shuffled
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), (n - i) as Score))
                .collect(),
        )
        .unwrap();
        let texts = ids.iter().map(|i| (i.clone(), format!("t {i}"))).collect();
        (list, texts, grade_map)
    }

    fn true_order(list: &RankedList, grades: &HashMap<String, i64>) -> Vec<String> {
        let mut want: Vec<String> = list.doc_ids().map(String::from).collect();
        want.sort_by(|a, b| grades[b].cmp(&grades[a]).then_with(|| a.cmp(b)));
        want
    }

    #[test]
    fn single_match_applies_the_scorer_permutation() {
        let (list, texts, grades) = instance(5, 11);
        let cfg = TournamentConfig::default();
        let out = tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
            .unwrap();
        let got: Vec<String> = out.doc_ids().map(String::from).collect();
        assert_eq!(got, true_order(&list, &grades));
    }

    #[test]
    fn n20_oracle_extracts_the_true_top_ten_in_order() {
        for seed in 0..8 {
            let (list, texts, grades) = instance(20, seed);
            let cfg = TournamentConfig::default();
            let out =
                tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
                    .unwrap();
            let got: Vec<String> = out.doc_ids().take(10).map(String::from).collect();
            let want: Vec<String> = true_order(&list, &grades).into_iter().take(10).collect();
            assert_eq!(got, want, "seed {seed}");
        }
    }

    #[test]
    fn caching_call_counts_match_the_worked_case() {
        // n=25, m=5, r=2: bracket = 5 leaves + 2 semis + 1 final = 8 calls
        // for the first winner; each later extraction re-runs only the
        // winner's 3-match path.
        let (list, texts, grades) = instance(25, 5);
        let oracle = CountingListwise::new(GradeOracle(grades));
        let cfg = TournamentConfig {
            match_size: 5,
            promote: 2,
            top_k: 1,
        };
        tournament_rerank(&oracle, &query(), &list, &texts, &cfg).unwrap();
        assert_eq!(oracle.calls(), 8, "first extraction builds the bracket");

        oracle.reset();
        let cfg2 = TournamentConfig {
            top_k: 2,
            ..cfg
        };
        tournament_rerank(&oracle, &query(), &list, &texts, &cfg2).unwrap();
        assert_eq!(
            oracle.calls(),
            8 + 3,
            "second extraction re-evaluates exactly the 3 matches on the winner's path"
        );
    }

    #[test]
    fn first_extraction_call_count_at_n100() {
        // m=5, r=2: 20 leaves + 8 + 4 + 2 + 1 = 35 matches, but the third
        // round chunks a 16-item promotion stream into (5,5,5,1) and the
        // single-member match resolves without a scorer call: 34 calls.
        let (list, texts, grades) = instance(100, 4);
        let oracle = CountingListwise::new(GradeOracle(grades));
        let cfg = TournamentConfig {
            match_size: 5,
            promote: 2,
            top_k: 1,
        };
        tournament_rerank(&oracle, &query(), &list, &texts, &cfg).unwrap();
        assert_eq!(oracle.calls(), 34);
    }

    #[test]
    fn cached_extraction_is_cheaper_than_rebuilding() {
        let (list, texts, grades) = instance(25, 6);
        let cfg = TournamentConfig {
            match_size: 5,
            promote: 2,
            top_k: 10,
        };
        let cached = CountingListwise::new(GradeOracle(grades.clone()));
        let out = tournament_rerank(&cached, &query(), &list, &texts, &cfg).unwrap();
        // 8 for the bracket + at most 3 per subsequent extraction.
        assert!(cached.calls() <= 8 + 9 * 3, "got {}", cached.calls());

        // No-cache baseline: a fresh bracket per extraction over the
        // remaining items.
        let baseline = CountingListwise::new(GradeOracle(grades));
        let mut remaining = list.clone();
        let mut extracted_baseline: Vec<String> = Vec::new();
        for _ in 0..cfg.top_k {
            let single = TournamentConfig { top_k: 1, ..cfg };
            let round =
                tournament_rerank(&baseline, &query(), &remaining, &texts, &single).unwrap();
            let winner = round.entries[0].doc_id.clone();
            extracted_baseline.push(winner.clone());
            let rest: Vec<(String, Score)> = remaining
                .entries
                .iter()
                .filter(|e| e.doc_id != winner)
                .map(|e| (e.doc_id.clone(), e.score))
                .collect();
            remaining = RankedList::from_sorted("q1", rest).unwrap();
        }
        let cached_top: Vec<String> = out.doc_ids().take(10).map(String::from).collect();
        assert_eq!(cached_top, extracted_baseline, "same winners either way");
        assert!(
            (cached.calls() as f64) < 0.6 * baseline.calls() as f64,
            "caching saved too little: {} vs {}",
            cached.calls(),
            baseline.calls()
        );
    }

    #[test]
    fn oracle_top_k_exactness_over_random_instances() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..25 {
            let n = rng.gen_range(1..=200);
            let m = rng.gen_range(3..=8);
            let r = rng.gen_range(1..m);
            let k = rng.gen_range(1..=n.min(30));
            let (list, texts, grades) = instance(n, 1000 + trial);
            let cfg = TournamentConfig {
                match_size: m,
                promote: r,
                top_k: k,
            };
            let out =
                tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
                    .unwrap();
            let got: Vec<String> = out.doc_ids().take(k).map(String::from).collect();
            let want: Vec<String> = true_order(&list, &grades).into_iter().take(k).collect();
            assert_eq!(got, want, "n={n} m={m} r={r} k={k}");
        }
    }

    #[test]
    fn extracted_prefix_is_invariant_to_input_order() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (list, texts, grades) = instance(60, 42);
        let cfg = TournamentConfig::default();
        let base = tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
            .unwrap();
        let base_top: Vec<String> = base.doc_ids().take(cfg.top_k).map(String::from).collect();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let mut ids: Vec<String> = list.doc_ids().map(String::from).collect();
            ids.shuffle(&mut rng);
            let relisted = RankedList::from_sorted(
                "q1",
                ids.iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), (ids.len() - i) as Score))
                    .collect(),
            )
            .unwrap();
            let out =
                tournament_rerank(&GradeOracle(grades.clone()), &query(), &relisted, &texts, &cfg)
                    .unwrap();
            let top: Vec<String> = out.doc_ids().take(cfg.top_k).map(String::from).collect();
            assert_eq!(top, base_top);
        }
    }

    #[test]
    fn conservation_and_tail_order() {
        let (list, texts, grades) = instance(33, 12);
        let cfg = TournamentConfig::default();
        let out =
            tournament_rerank(&GradeOracle(grades), &query(), &list, &texts, &cfg).unwrap();
        out.validate().unwrap();
        let mut got: Vec<String> = out.doc_ids().map(String::from).collect();
        let extracted: HashSet<String> = got.iter().take(cfg.top_k).cloned().collect();
        // Tail preserves original relative order.
        let tail: Vec<String> = got[cfg.top_k..].to_vec();
        let want_tail: Vec<String> = list
            .doc_ids()
            .filter(|id| !extracted.contains(*id))
            .map(String::from)
            .collect();
        assert_eq!(tail, want_tail);
        got.sort();
        let mut want: Vec<String> = list.doc_ids().map(String::from).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn failing_scorer_still_conserves_and_is_deterministic() {
        let (list, texts, _) = instance(25, 3);
        let cfg = TournamentConfig::default();
        let out = tournament_rerank(&Failing, &query(), &list, &texts, &cfg).unwrap();
        out.validate().unwrap();
        // Every match resolves in slot order, so the first input item wins
        // the first extraction, and reruns agree exactly.
        assert_eq!(out.entries[0].doc_id, list.entries[0].doc_id);
        let mut got: Vec<String> = out.doc_ids().map(String::from).collect();
        let rerun = tournament_rerank(&Failing, &query(), &list, &texts, &cfg).unwrap();
        let rerun_ids: Vec<String> = rerun.doc_ids().map(String::from).collect();
        assert_eq!(got, rerun_ids);
        got.sort();
        let mut want: Vec<String> = list.doc_ids().map(String::from).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn top_k_beyond_n_extracts_everything() {
        let (list, texts, grades) = instance(7, 8);
        let cfg = TournamentConfig {
            match_size: 3,
            promote: 1,
            top_k: 50,
        };
        let out = tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
            .unwrap();
        let got: Vec<String> = out.doc_ids().map(String::from).collect();
        assert_eq!(got, true_order(&list, &grades));
    }

    #[test]
    fn single_candidate_works() {
        let (list, texts, grades) = instance(1, 0);
        let cfg = TournamentConfig::default();
        let out =
            tournament_rerank(&GradeOracle(grades), &query(), &list, &texts, &cfg).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let (list, texts, _) = instance(5, 0);
        for cfg in [
            TournamentConfig {
                match_size: 5,
                promote: 0,
                top_k: 10,
            },
            TournamentConfig {
                match_size: 5,
                promote: 5,
                top_k: 10,
            },
            TournamentConfig {
                match_size: 5,
                promote: 2,
                top_k: 0,
            },
        ] {
            assert!(
                tournament_rerank(&Failing, &query(), &list, &texts, &cfg).is_err(),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn awkward_geometries_terminate_and_stay_exact() {
        // m=3, r=2 exercises levels whose promotion stream does not shrink
        // the match count immediately.
        for (n, seed) in [(9, 1), (27, 2), (81, 3), (2, 4), (3, 5), (4, 6)] {
            let (list, texts, grades) = instance(n, seed);
            let cfg = TournamentConfig {
                match_size: 3,
                promote: 2,
                top_k: n.min(5),
            };
            let out =
                tournament_rerank(&GradeOracle(grades.clone()), &query(), &list, &texts, &cfg)
                    .unwrap();
            let got: Vec<String> = out.doc_ids().take(cfg.top_k).map(String::from).collect();
            let want: Vec<String> =
                true_order(&list, &grades).into_iter().take(cfg.top_k).collect();
            assert_eq!(got, want, "n={n}");
        }
    }
}
