//! Corpus-level BLEU, per-sentence smoothed BLEU and function-word
//! F-measure.

use std::collections::HashMap;

use crate::graph::{FwKind, GoldRealization, NodeId, TokenSource};

const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone)]
pub struct BleuReport {
    /// Corpus BLEU-4 in [0, 100].
    pub bleu: f64,
    /// Modified n-gram precisions for n = 1..4.
    pub precisions: [f64; MAX_NGRAM],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// Per-sentence smoothed BLEU, add-one on orders above 1.
    pub sentence: Vec<f64>,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and totals for one hypothesis/reference pair.
fn matches(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let mut matched = 0usize;
    let mut total = 0usize;
    for (gram, count) in hyp_counts {
        total += count;
        matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
    }
    (matched, total)
}

/// Standard corpus BLEU-4 with brevity penalty, case-sensitive, single
/// reference per hypothesis. Zero higher-order matches give a zero corpus
/// score; the per-sentence column uses add-one smoothing instead.
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<BleuReport, String> {
    if hyps.len() != refs.len() {
        return Err(format!(
            "corpus length mismatch: {} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        ));
    }
    let mut matched = [0usize; MAX_NGRAM];
    let mut total = [0usize; MAX_NGRAM];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut sentence = Vec::with_capacity(hyps.len());
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        let mut sent_precisions = [0.0f64; MAX_NGRAM];
        for n in 1..=MAX_NGRAM {
            let (m, t) = matches(h, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
            sent_precisions[n - 1] = if n == 1 {
                if t > 0 {
                    m as f64 / t as f64
                } else {
                    0.0
                }
            } else {
                (m + 1) as f64 / (t + 1) as f64
            };
        }
        sentence.push(combine(sent_precisions, h.len(), r.len()));
    }
    let mut precisions = [0.0f64; MAX_NGRAM];
    for n in 0..MAX_NGRAM {
        precisions[n] = if total[n] > 0 {
            matched[n] as f64 / total[n] as f64
        } else {
            0.0
        };
    }
    let brevity_penalty = bp(hyp_len, ref_len);
    let bleu = combine(precisions, hyp_len, ref_len);
    Ok(BleuReport { bleu, precisions, brevity_penalty, hyp_len, ref_len, sentence })
}

fn bp(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

fn combine(precisions: [f64; MAX_NGRAM], hyp_len: usize, ref_len: usize) -> f64 {
    if precisions.iter().any(|&p| p == 0.0) {
        return 0.0;
    }
    let log_mean: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_NGRAM as f64;
    100.0 * bp(hyp_len, ref_len) * log_mean.exp()
}

/// Precision, recall and F1 for one function-word class, all in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

fn prf(matched: usize, predicted: usize, gold: usize) -> PrF {
    let precision = if predicted == 0 { 100.0 } else { 100.0 * matched as f64 / predicted as f64 };
    let recall = if gold == 0 { 100.0 } else { 100.0 * matched as f64 / gold as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrF { precision, recall, f1, predicted, gold, matched }
}

#[derive(Debug, Clone)]
pub struct FwReport {
    pub to: PrF,
    pub that: PrF,
    pub comma: PrF,
}

impl FwReport {
    pub fn class(&self, kind: FwKind) -> &PrF {
        match kind {
            FwKind::To => &self.to,
            FwKind::That => &self.that,
            FwKind::Comma => &self.comma,
        }
    }
}

/// Function-word occurrences of one realization as (class, attachment
/// head node) pairs; heads that are themselves function words resolve
/// through to the nearest content ancestor.
pub fn fw_occurrences(gold: &GoldRealization) -> Vec<(FwKind, NodeId)> {
    let node_at = |mut pos: usize| -> Option<NodeId> {
        loop {
            match gold.token_at(pos).map(|t| (t.source, t.head)) {
                Some((TokenSource::Node(id), _)) => return Some(id),
                Some((TokenSource::Fw(_), head)) => pos = head,
                None => return None,
            }
        }
    };
    gold.tokens
        .iter()
        .filter_map(|t| match t.source {
            TokenSource::Fw(kind) => node_at(t.head).map(|h| (kind, h)),
            TokenSource::Node(_) => None,
        })
        .collect()
}

/// Micro-averaged P/R/F per class over aligned instances, matching
/// occurrences by (class, attachment head).
pub fn fw_fmeasure(
    pred: &[Vec<(FwKind, NodeId)>],
    gold: &[Vec<(FwKind, NodeId)>],
) -> Result<FwReport, String> {
    if pred.len() != gold.len() {
        return Err("instance count mismatch".to_string());
    }
    let mut matched: HashMap<FwKind, usize> = HashMap::new();
    let mut n_pred: HashMap<FwKind, usize> = HashMap::new();
    let mut n_gold: HashMap<FwKind, usize> = HashMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let mut p_counts: HashMap<(FwKind, NodeId), usize> = HashMap::new();
        let mut g_counts: HashMap<(FwKind, NodeId), usize> = HashMap::new();
        for &occ in p {
            *p_counts.entry(occ).or_insert(0) += 1;
            *n_pred.entry(occ.0).or_insert(0) += 1;
        }
        for &occ in g {
            *g_counts.entry(occ).or_insert(0) += 1;
            *n_gold.entry(occ.0).or_insert(0) += 1;
        }
        for (occ, pc) in p_counts {
            let gc = g_counts.get(&occ).copied().unwrap_or(0);
            *matched.entry(occ.0).or_insert(0) += pc.min(gc);
        }
    }
    let get = |m: &HashMap<FwKind, usize>, k: FwKind| m.get(&k).copied().unwrap_or(0);
    Ok(FwReport {
        to: prf(get(&matched, FwKind::To), get(&n_pred, FwKind::To), get(&n_gold, FwKind::To)),
        that: prf(
            get(&matched, FwKind::That),
            get(&n_pred, FwKind::That),
            get(&n_gold, FwKind::That),
        ),
        comma: prf(
            get(&matched, FwKind::Comma),
            get(&n_pred, FwKind::Comma),
            get(&n_gold, FwKind::Comma),
        ),
    })
}

/// The fixed-order machine-parseable report: BLEU first, then one line per
/// function-word class.
pub fn format_report(bleu: &BleuReport, fw: Option<&FwReport>) -> String {
    let mut out = format!(
        "BLEU={:.2}\nBP={:.3} ratio={:.3} hyp_len={} ref_len={}\nprecisions={:.1}/{:.1}/{:.1}/{:.1}\n",
        bleu.bleu,
        bleu.brevity_penalty,
        if bleu.ref_len > 0 { bleu.hyp_len as f64 / bleu.ref_len as f64 } else { 0.0 },
        bleu.hyp_len,
        bleu.ref_len,
        100.0 * bleu.precisions[0],
        100.0 * bleu.precisions[1],
        100.0 * bleu.precisions[2],
        100.0 * bleu.precisions[3],
    );
    if let Some(fw) = fw {
        for kind in [FwKind::To, FwKind::That, FwKind::Comma] {
            let c = fw.class(kind);
            out.push_str(&format!(
                "F[{}]={:.1} P={:.1} R={:.1} (pred={} gold={})\n",
                kind.src_tag(),
                c.f1,
                c.precision,
                c.recall,
                c.predicted,
                c.gold
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    #[test]
    fn identity_corpus_scores_100() {
        let corpus = vec![toks("a b c d e"), toks("f g h i")];
        let report = bleu(&corpus, &corpus).unwrap();
        assert!((report.bleu - 100.0).abs() < 1e-9);
        assert_eq!(report.brevity_penalty, 1.0);
    }

    #[test]
    fn hand_countable_case() {
        let report = bleu(&[toks("a b c d")], &[toks("a b c e")]).unwrap();
        assert!((report.precisions[0] - 3.0 / 4.0).abs() < 1e-12);
        assert!((report.precisions[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.precisions[2] - 1.0 / 2.0).abs() < 1e-12);
        assert_eq!(report.precisions[3], 0.0);
        assert_eq!(report.bleu, 0.0); // zero 4-gram match, no smoothing
        // smoothed sentence score: p1=3/4 raw, higher orders add-one
        let expected = 100.0
            * ((3.0f64 / 4.0).ln() / 4.0
                + (3.0f64 / 4.0).ln() / 4.0
                + (2.0f64 / 3.0).ln() / 4.0
                + (1.0f64 / 2.0).ln() / 4.0)
                .exp();
        assert!((report.sentence[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let report = bleu(&[vec![]], &[toks("a b c")]).unwrap();
        assert_eq!(report.bleu, 0.0);
        assert_eq!(report.brevity_penalty, 0.0);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(bleu(&[toks("a")], &[]).is_err());
    }

    #[test]
    fn relabeling_symmetry() {
        let hyps = vec![toks("a b a c"), toks("b b d")];
        let refs = vec![toks("a b c a"), toks("b d b")];
        let map = |t: &str| format!("tok_{t}");
        let relab = |c: &[Vec<String>]| -> Vec<Vec<String>> {
            c.iter()
                .map(|s| s.iter().map(|t| map(t)).collect())
                .collect()
        };
        let a = bleu(&hyps, &refs).unwrap();
        let b = bleu(&relab(&hyps), &relab(&refs)).unwrap();
        assert!((a.bleu - b.bleu).abs() < 1e-12);
    }

    #[test]
    fn corrupting_one_token_never_raises_bleu() {
        let reference = toks("the prices are thought to have increased today .");
        for i in 0..reference.len() {
            let mut hyp = reference.clone();
            hyp[i] = "CORRUPT".to_string();
            let perfect = bleu(&[reference.clone()], &[reference.clone()]).unwrap();
            let corrupted = bleu(&[hyp], &[reference.clone()]).unwrap();
            assert!(corrupted.bleu <= perfect.bleu);
        }
    }

    #[test]
    fn fmeasure_partial_recall() {
        // Predict 1 of 2 gold commas, nothing spurious.
        let gold = vec![vec![(FwKind::Comma, 3), (FwKind::Comma, 5)]];
        let pred = vec![vec![(FwKind::Comma, 3)]];
        let report = fw_fmeasure(&pred, &gold).unwrap();
        assert!((report.comma.precision - 100.0).abs() < 1e-9);
        assert!((report.comma.recall - 50.0).abs() < 1e-9);
        assert!((report.comma.f1 - 200.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn fmeasure_perfect_is_100() {
        let occ = vec![vec![(FwKind::To, 2), (FwKind::That, 4)]];
        let report = fw_fmeasure(&occ, &occ).unwrap();
        assert_eq!(report.to.f1, 100.0);
        assert_eq!(report.that.f1, 100.0);
        assert_eq!(report.comma.f1, 100.0); // vacuous class
    }

    #[test]
    fn fmeasure_is_harmonic_mean() {
        let gold = vec![vec![(FwKind::To, 1), (FwKind::To, 2), (FwKind::To, 3)]];
        let pred = vec![vec![(FwKind::To, 1), (FwKind::To, 9)]];
        let r = fw_fmeasure(&pred, &gold).unwrap();
        let expected = 2.0 * r.to.precision * r.to.recall / (r.to.precision + r.to.recall);
        assert!((r.to.f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn occurrences_resolve_fw_heads_to_content() {
        let gold = GoldRealization::parse_line(
            "1|meanwhile|7|4|ADV 2|,|COMMA|4|P 3|prices|2|4|SBJ 4|are|5|0|SROOT 5|thought|1|4|VC 6|to|TO|5|C-A1 7|have|6|6|C-A1 8|increased|4|7|VC 9|.|3|4|P",
        )
        .unwrap();
        let occ = fw_occurrences(&gold);
        assert_eq!(occ, vec![(FwKind::Comma, 5), (FwKind::To, 1)]);
    }
}
