//! Candidate inflection generation from lemma plus attributes, backed by a
//! small lexicon, and the feature templates for the singular/plural verb
//! classifier used by the pipelined baseline.

use std::collections::BTreeMap;
use std::fmt;

use crate::features::NONE;
use crate::graph::{DeepGraph, Node, NodeId, Number, Partic, Tense};

/// Inflection tags a lexicon entry can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InflTag {
    Vbg,
    Vbn,
    Vbd,
    Vbz,
    Nn,
    Nns,
    Nnp,
    Nnps,
}

impl InflTag {
    pub const ALL: [InflTag; 8] = [
        InflTag::Vbg,
        InflTag::Vbn,
        InflTag::Vbd,
        InflTag::Vbz,
        InflTag::Nn,
        InflTag::Nns,
        InflTag::Nnp,
        InflTag::Nnps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InflTag::Vbg => "VBG",
            InflTag::Vbn => "VBN",
            InflTag::Vbd => "VBD",
            InflTag::Vbz => "VBZ",
            InflTag::Nn => "NN",
            InflTag::Nns => "NNS",
            InflTag::Nnp => "NNP",
            InflTag::Nnps => "NNPS",
        }
    }

    pub fn parse(s: &str) -> Option<InflTag> {
        InflTag::ALL.iter().copied().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for InflTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Immutable (lemma, tag) -> form table. Lookups are total: a missing
/// entry falls back to the lemma itself and the fallback is flagged.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<(String, InflTag), String>,
    by_form: BTreeMap<String, Vec<(String, InflTag)>>,
}

impl Lexicon {
    /// Parses `lemma<TAB>tag<TAB>form` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Lexicon, String> {
        let mut lex = Lexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(format!("lexicon line {}: expected 3 columns", i + 1));
            }
            let tag = InflTag::parse(cols[1])
                .ok_or_else(|| format!("lexicon line {}: unknown tag `{}`", i + 1, cols[1]))?;
            lex.insert(cols[0], tag, cols[2]);
        }
        Ok(lex)
    }

    pub fn insert(&mut self, lemma: &str, tag: InflTag, form: &str) {
        self.entries.insert((lemma.to_string(), tag), form.to_string());
        let owners = self.by_form.entry(form.to_string()).or_default();
        let key = (lemma.to_string(), tag);
        if !owners.contains(&key) {
            owners.push(key);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact lookup without fallback.
    pub fn lookup(&self, lemma: &str, tag: InflTag) -> Option<&str> {
        self.entries.get(&(lemma.to_string(), tag)).map(|s| s.as_str())
    }

    /// Total lookup; the boolean marks the identity fallback.
    pub fn get(&self, lemma: &str, tag: InflTag) -> (String, bool) {
        match self.lookup(lemma, tag) {
            Some(form) => (form.to_string(), false),
            None => (lemma.to_string(), true),
        }
    }

    /// All known forms of a lemma, the lemma itself first, deduplicated and
    /// ordered by [`InflTag::ALL`].
    pub fn getall(&self, lemma: &str) -> Vec<String> {
        let mut forms = vec![lemma.to_string()];
        for tag in InflTag::ALL {
            if let Some(form) = self.lookup(lemma, tag) {
                if !forms.iter().any(|f| f == form) {
                    forms.push(form.to_string());
                }
            }
        }
        forms
    }

    /// Tags under which a surface form is listed.
    pub fn tags_of_form(&self, form: &str) -> Vec<InflTag> {
        let mut tags: Vec<InflTag> = self
            .by_form
            .get(form)
            .map(|v| v.iter().map(|(_, t)| *t).collect())
            .unwrap_or_default();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Singular/plural indicator of a surface form via noun entries.
    pub fn count_of_form(&self, form: &str) -> Option<Number> {
        let tags = self.tags_of_form(form);
        if tags.contains(&InflTag::Nns) || tags.contains(&InflTag::Nnps) {
            Some(Number::Pl)
        } else if tags.contains(&InflTag::Nn) || tags.contains(&InflTag::Nnp) {
            Some(Number::Sg)
        } else {
            None
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for ((lemma, tag), form) in &self.entries {
            out.push_str(&format!("{lemma}\t{tag}\t{form}\n"));
        }
        out
    }
}

/// Candidate surface forms for one node, plus which rule branch fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InflectionCandidates {
    pub node: NodeId,
    pub forms: Vec<String>,
    pub rule: &'static str,
    /// An identity fallback stood in for a missing lexicon entry.
    pub fallback: bool,
}

/// The child of `id` attached with label SBJ; lowest id wins on ties.
pub fn subject_of(id: NodeId, g: &DeepGraph) -> Option<NodeId> {
    g.arcs
        .iter()
        .filter(|a| a.head == id && a.label == "SBJ")
        .map(|a| a.child)
        .min()
}

fn subject_num(node: &Node, g: &DeepGraph) -> Option<Number> {
    subject_of(node.id, g).and_then(|s| g.node(s)).and_then(|n| n.attrs.num)
}

/// Applies the inflection rules top to bottom within the node's category
/// and returns a non-empty candidate list.
pub fn candidate_inflections(node: &Node, g: &DeepGraph, lex: &Lexicon) -> InflectionCandidates {
    let mk = |forms: Vec<String>, rule: &'static str, fallback: bool| InflectionCandidates {
        node: node.id,
        forms,
        rule,
        fallback,
    };
    let owned = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    if node.lemma == "be" {
        if node.attrs.partic == Some(Partic::Pres) {
            return mk(owned(&["being"]), "be:partic=pres", false);
        }
        if node.attrs.partic == Some(Partic::Past) {
            return mk(owned(&["been"]), "be:partic=past", false);
        }
        match node.attrs.tense {
            Some(Tense::Past) => {
                return match subject_num(node, g) {
                    Some(Number::Sg) => mk(owned(&["was"]), "be:past:sg", false),
                    Some(Number::Pl) => mk(owned(&["were"]), "be:past:pl", false),
                    None => mk(owned(&["was", "were"]), "be:past:other", false),
                };
            }
            Some(Tense::Pres) => {
                return match subject_num(node, g) {
                    Some(Number::Sg) => mk(owned(&["is"]), "be:pres:sg", false),
                    Some(Number::Pl) => mk(owned(&["are"]), "be:pres:pl", false),
                    None => mk(owned(&["am", "is", "are"]), "be:pres:other", false),
                };
            }
            None => return mk(owned(&["be"]), "be:default", false),
        }
    }

    // Other verbs: anything carrying tense or participle attributes.
    if node.attrs.partic.is_some() || node.attrs.tense.is_some() {
        if node.attrs.partic == Some(Partic::Pres) {
            let (form, fb) = lex.get(&node.lemma, InflTag::Vbg);
            return mk(vec![form], "verb:partic=pres", fb);
        }
        if node.attrs.partic == Some(Partic::Past) {
            let (form, fb) = lex.get(&node.lemma, InflTag::Vbn);
            return mk(vec![form], "verb:partic=past", fb);
        }
        if node.attrs.tense == Some(Tense::Past) {
            let (form, fb) = lex.get(&node.lemma, InflTag::Vbd);
            return mk(vec![form], "verb:tense=past", fb);
        }
        // tense == pres from here on
        if subject_num(node, g) == Some(Number::Sg) {
            let (form, fb) = lex.get(&node.lemma, InflTag::Vbz);
            return mk(vec![form], "verb:pres:sg", fb);
        }
        return mk(lex.getall(&node.lemma), "verb:pres:other", false);
    }

    // Other types.
    if node.lemma == "a" {
        return mk(owned(&["a", "an"]), "article", false);
    }
    if node.lemma == "not" {
        return mk(owned(&["not", "n't"]), "negation", false);
    }
    match node.attrs.num {
        Some(Number::Sg) => {
            let (form, fb) = match lex.lookup(&node.lemma, InflTag::Nnp) {
                Some(f) => (f.to_string(), false),
                None => lex.get(&node.lemma, InflTag::Nn),
            };
            mk(vec![form], "noun:sg", fb)
        }
        Some(Number::Pl) => {
            let (form, fb) = match lex.lookup(&node.lemma, InflTag::Nnps) {
                Some(f) => (f.to_string(), false),
                None => lex.get(&node.lemma, InflTag::Nns),
            };
            mk(vec![form], "noun:pl", fb)
        }
        None => mk(vec![node.lemma.clone()], "identity", false),
    }
}

/// Feature templates for choosing between singular and plural verb forms:
/// word windows around position `n` (0-based index into `forms`), their
/// count indicators, and the subject word when known.
pub fn sg_pl_features(
    n: usize,
    forms: &[String],
    subject_form: Option<&str>,
    lex: &Lexicon,
) -> Vec<String> {
    let word = |i: isize| -> &str {
        if i < 0 || i as usize >= forms.len() {
            NONE
        } else {
            forms[i as usize].as_str()
        }
    };
    let count = |i: isize| -> &str {
        if i < 0 || i as usize >= forms.len() {
            return NONE;
        }
        match lex.count_of_form(&forms[i as usize]) {
            Some(Number::Sg) => "sg",
            Some(Number::Pl) => "pl",
            None => NONE,
        }
    };
    let n = n as isize;
    let subj = subject_form.unwrap_or(NONE);
    let subj_count = subject_form
        .map(|f| match lex.count_of_form(f) {
            Some(Number::Sg) => "sg",
            Some(Number::Pl) => "pl",
            None => NONE,
        })
        .unwrap_or(NONE);
    vec![
        format!("w-1w-2w-3:{}_{}_{}", word(n - 1), word(n - 2), word(n - 3)),
        format!("csubj:{subj_count}"),
        format!("c-1c-2c-3:{}_{}_{}", count(n - 1), count(n - 2), count(n - 3)),
        format!("subj:{subj}"),
        format!("w-1w-2:{}_{}", word(n - 1), word(n - 2)),
        format!("c-1c-2:{}_{}", count(n - 1), count(n - 2)),
        format!("w-1:{}", word(n - 1)),
        format!("c-1:{}", count(n - 1)),
        format!("w+1:{}", word(n + 1)),
        format!("c+1:{}", count(n + 1)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_instance, Attrs};

    fn lex() -> Lexicon {
        Lexicon::parse(
            "increase\tVBZ\tincreases\nincrease\tVBD\tincreased\nincrease\tVBG\tincreasing\n\
increase\tVBN\tincreased\nprice\tNN\tprice\nprice\tNNS\tprices\n\
september\tNNP\tseptember\nsecurity\tNNS\tsecurities\nsecurity\tNNPS\tsecurities\n",
        )
        .unwrap()
    }

    fn node(lemma: &str, attrs: Attrs) -> Node {
        Node { id: 1, lemma: lemma.to_string(), attrs, lexeme: None }
    }

    fn graph_with_subject(num: Option<Number>) -> DeepGraph {
        let mut block = String::from("SROOT\t1\t0\tbe\ttense=pres\t_\n");
        match num {
            Some(Number::Pl) => block.push_str("SBJ\t2\t1\tprice\tnum=pl\t_"),
            Some(Number::Sg) => block.push_str("SBJ\t2\t1\tprice\tnum=sg\t_"),
            None => block.push_str("SBJ\t2\t1\tprice\t_\t_"),
        }
        parse_instance(&block).unwrap()
    }

    #[test]
    fn be_present_plural_subject() {
        let g = graph_with_subject(Some(Number::Pl));
        let n = g.node(1).unwrap();
        let c = candidate_inflections(n, &g, &lex());
        assert_eq!(c.forms, vec!["are"]);
    }

    #[test]
    fn be_participle_beats_tense() {
        let mut g = graph_with_subject(Some(Number::Pl));
        g.nodes.get_mut(&1).unwrap().attrs.partic = Some(Partic::Past);
        let n = g.node(1).unwrap().clone();
        let c = candidate_inflections(&n, &g, &lex());
        assert_eq!(c.forms, vec!["been"]);
    }

    #[test]
    fn be_present_unknown_subject() {
        let g = graph_with_subject(None);
        let c = candidate_inflections(g.node(1).unwrap(), &g, &lex());
        assert_eq!(c.forms, vec!["am", "is", "are"]);
    }

    #[test]
    fn article_and_negation() {
        let g = graph_with_subject(None);
        let a = candidate_inflections(&node("a", Attrs::default()), &g, &lex());
        assert_eq!(a.forms, vec!["a", "an"]);
        let not = candidate_inflections(&node("not", Attrs::default()), &g, &lex());
        assert_eq!(not.forms, vec!["not", "n't"]);
    }

    #[test]
    fn verb_present_plural_gets_all_forms() {
        let mut g = graph_with_subject(Some(Number::Pl));
        let n = g.nodes.get_mut(&1).unwrap();
        n.lemma = "increase".to_string();
        let n = g.node(1).unwrap().clone();
        let c = candidate_inflections(&n, &g, &lex());
        assert_eq!(c.forms[0], "increase"); // base form first
        assert!(c.forms.contains(&"increases".to_string()));
        assert!(c.forms.contains(&"increased".to_string()));
    }

    #[test]
    fn unknown_lemma_falls_back_to_identity() {
        let g = graph_with_subject(None);
        let mut attrs = Attrs::default();
        attrs.tense = Some(Tense::Past);
        let c = candidate_inflections(&node("zorp", attrs), &g, &lex());
        assert_eq!(c.forms, vec!["zorp"]);
        assert!(c.fallback);
    }

    #[test]
    fn noun_plural_prefers_proper_form() {
        let g = graph_with_subject(None);
        let mut attrs = Attrs::default();
        attrs.num = Some(Number::Pl);
        let c = candidate_inflections(&node("security", attrs), &g, &lex());
        assert_eq!(c.forms, vec!["securities"]);
        assert_eq!(c.rule, "noun:pl");
    }

    #[test]
    fn subject_tie_break_lowest_id() {
        let g = parse_instance(
            "SROOT\t1\t0\tbe\t_\t_\nSBJ\t3\t1\tprice\tnum=sg\t_\nSBJ\t2\t1\tmarket\tnum=pl\t_",
        )
        .unwrap();
        assert_eq!(subject_of(1, &g), Some(2));
    }

    #[test]
    fn count_features_read_lexicon() {
        let forms: Vec<String> = ["prices", "are"].iter().map(|s| s.to_string()).collect();
        let feats = sg_pl_features(1, &forms, Some("prices"), &lex());
        assert!(feats.contains(&"c-1:pl".to_string()));
        assert!(feats.contains(&"csubj:pl".to_string()));
        // sentence start fills with NONE
        let feats0 = sg_pl_features(0, &forms, None, &lex());
        assert!(feats0.contains(&format!("w-1:{NONE}")));
        assert!(feats0.contains(&format!("subj:{NONE}")));
    }
}
