//! Rule-based extraction of the semantic segments an expert explanation talks
//! about.
//!
//! Terminal rules come from the [`Lexicon`] (surface form → segment); extra
//! rewrite rules `α → β` in a [`RuleSet`] expand categories into further
//! surface forms. Parsing is a left-to-right longest-match scan (3, then 2,
//! then 1 token windows) that skips every token no rule accounts for, so any
//! input yields a result.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::SegmentEntry;

pub const MAX_SURFACE_TOKENS: usize = 3;

/// Lowercases, drops punctuation (hyphens survive inside words) and splits
/// on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if c == '-' {
            let inner = i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            cleaned.push(if inner { '-' } else { ' ' });
        } else if c == '\'' || c == '\u{2019}' {
            // possessives: "gull's" -> "gulls"
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<Vec<String>, u32>,
    names: BTreeMap<u32, String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `id` with its canonical name and the canonical name as a surface form.
    pub fn add_segment(&mut self, id: u32, canonical: &str) -> Result<()> {
        self.names.insert(id, canonical.to_string());
        self.insert(canonical, id)
    }

    pub fn insert(&mut self, surface: &str, id: u32) -> Result<()> {
        let tokens = tokenize(surface);
        if tokens.is_empty() || tokens.len() > MAX_SURFACE_TOKENS {
            return Err(Error::InvalidRules(format!(
                "surface form {surface:?} must have 1..={MAX_SURFACE_TOKENS} tokens"
            )));
        }
        self.insert_tokens(tokens, id)
    }

    fn insert_tokens(&mut self, tokens: Vec<String>, id: u32) -> Result<()> {
        match self.entries.get(&tokens) {
            Some(&existing) if existing != id => Err(Error::DuplicateSurfaceForm(tokens.join(" "))),
            _ => {
                self.entries.insert(tokens, id);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, tokens: &[String]) -> Option<u32> {
        self.entries.get(tokens).copied()
    }

    pub fn segment_name(&self, id: u32) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    pub fn segment_id(&self, canonical: &str) -> Option<u32> {
        self.names.iter().find(|(_, n)| *n == canonical).map(|(id, _)| *id)
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.names.keys().copied()
    }

    /// Reads `{"canonical": ["synonym", ...], ...}`; ids follow file order.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut catalog = Vec::with_capacity(map.len());
        for (i, (name, synonyms)) in map.into_iter().enumerate() {
            let synonyms: Vec<String> = serde_json::from_value(synonyms)?;
            catalog.push(SegmentEntry { segment_id: i as u32, canonical_name: name, synonyms });
        }
        default_lexicon(&catalog)
    }
}

/// Bird-part vocabulary used by the explanation corpus.
pub const CUB_LEXICON_JSON: &str = include_str!("../data/cub_lexicon.json");

pub fn cub_lexicon() -> Result<Lexicon> {
    Lexicon::from_json(CUB_LEXICON_JSON)
}

/// One entry per canonical name plus one per synonym.
pub fn default_lexicon(catalog: &[SegmentEntry]) -> Result<Lexicon> {
    let mut lex = Lexicon::new();
    for seg in catalog {
        lex.add_segment(seg.segment_id, &seg.canonical_name)?;
        for syn in &seg.synonyms {
            lex.insert(syn, seg.segment_id)?;
        }
    }
    Ok(lex)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symbol {
    Word(String),
    Category(String),
}

/// `lhs → rhs`. A category named after a segment's canonical name (e.g.
/// `bill`) yields surface forms for that segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

impl Rule {
    /// Parses `"lhs -> word $Category word"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (lhs, rhs) = spec
            .split_once("->")
            .ok_or_else(|| Error::InvalidRules(format!("rule {spec:?} has no '->'")))?;
        let lhs = lhs.trim().trim_start_matches('$').to_string();
        let rhs: Vec<Symbol> = rhs
            .split_whitespace()
            .map(|t| match t.strip_prefix('$') {
                Some(cat) => Symbol::Category(cat.to_string()),
                None => Symbol::Word(t.to_lowercase()),
            })
            .collect();
        if lhs.is_empty() || rhs.is_empty() {
            return Err(Error::InvalidRules(format!("rule {spec:?} has an empty side")));
        }
        Ok(Self { lhs, rhs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SkipPolicy {
    /// Unmatched tokens are ignored; the parse always completes.
    #[default]
    SkipUnmatched,
    /// Any unmatched token rejects the explanation (grammar debugging).
    RequireFullCover,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub skip: SkipPolicy,
}

impl RuleSet {
    pub fn with_rule(mut self, spec: &str) -> Result<Self> {
        self.rules.push(Rule::parse(spec)?);
        Ok(self)
    }

    /// Expands every category into its terminal word sequences.
    fn expansions(&self) -> Result<HashMap<String, Vec<Vec<String>>>> {
        let mut by_lhs: HashMap<&str, Vec<&Rule>> = HashMap::new();
        for r in &self.rules {
            by_lhs.entry(r.lhs.as_str()).or_default().push(r);
        }
        let mut done: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        let mut visiting = BTreeSet::new();
        for lhs in by_lhs.keys() {
            expand(lhs, &by_lhs, &mut done, &mut visiting)?;
        }
        Ok(done)
    }
}

fn expand(
    cat: &str,
    rules: &HashMap<&str, Vec<&Rule>>,
    done: &mut HashMap<String, Vec<Vec<String>>>,
    visiting: &mut BTreeSet<String>,
) -> Result<Vec<Vec<String>>> {
    if let Some(v) = done.get(cat) {
        return Ok(v.clone());
    }
    if !visiting.insert(cat.to_string()) {
        return Err(Error::InvalidRules(format!("category {cat:?} is recursive")));
    }
    let Some(alternatives) = rules.get(cat) else {
        return Err(Error::InvalidRules(format!("category {cat:?} has no rule")));
    };
    let mut out = Vec::new();
    for rule in alternatives {
        let mut partial: Vec<Vec<String>> = vec![Vec::new()];
        for sym in &rule.rhs {
            let options = match sym {
                Symbol::Word(w) => vec![vec![w.clone()]],
                Symbol::Category(c) => expand(c, rules, done, visiting)?,
            };
            partial = partial
                .iter()
                .flat_map(|p| options.iter().map(move |o| [p.as_slice(), o.as_slice()].concat()))
                .collect();
        }
        if let Some(long) = partial.iter().find(|p| p.len() > MAX_SURFACE_TOKENS) {
            return Err(Error::InvalidRules(format!(
                "category {cat:?} derives {:?}, longer than {MAX_SURFACE_TOKENS} tokens",
                long.join(" ")
            )));
        }
        out.extend(partial);
    }
    visiting.remove(cat);
    done.insert(cat.to_string(), out.clone());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedExplanation {
    pub pair: (usize, usize),
    /// Distinct segment ids in order of first mention.
    pub segments: Vec<u32>,
    pub raw_text: String,
}

/// Lexicon and rules compiled into one surface table.
#[derive(Debug, Clone)]
pub struct Parser {
    table: Lexicon,
    skip: SkipPolicy,
}

impl Parser {
    pub fn new(lexicon: &Lexicon, rules: &RuleSet) -> Result<Self> {
        let mut table = lexicon.clone();
        let expansions = rules.expansions()?;
        let mut cats: Vec<_> = expansions.into_iter().collect();
        cats.sort();
        for (cat, forms) in cats {
            if let Some(id) = lexicon.segment_id(&cat) {
                for form in forms {
                    table.insert_tokens(form, id)?;
                }
            }
        }
        Ok(Self { table, skip: rules.skip })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.table
    }

    pub fn parse(&self, text: &str, pair: (usize, usize)) -> Result<ParsedExplanation> {
        let tokens = tokenize(text);
        let mut segments = Vec::new();
        let mut i = 0;
        'scan: while i < tokens.len() {
            for len in (1..=MAX_SURFACE_TOKENS.min(tokens.len() - i)).rev() {
                if let Some(id) = self.table.lookup(&tokens[i..i + len]) {
                    if !segments.contains(&id) {
                        segments.push(id);
                    }
                    i += len;
                    continue 'scan;
                }
            }
            if self.skip == SkipPolicy::RequireFullCover {
                return Err(Error::NoSegmentsFound);
            }
            i += 1;
        }
        if segments.is_empty() {
            return Err(Error::NoSegmentsFound);
        }
        Ok(ParsedExplanation { pair, segments, raw_text: text.to_string() })
    }
}

pub fn parse(text: &str, pair: (usize, usize), lexicon: &Lexicon, rules: &RuleSet) -> Result<ParsedExplanation> {
    Parser::new(lexicon, rules)?.parse(text, pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u32, name: &str, syn: &[&str]) -> SegmentEntry {
        SegmentEntry {
            segment_id: id,
            canonical_name: name.into(),
            synonyms: syn.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("a bill with a black ring"), ["a", "bill", "with", "a", "black", "ring"]);
        let t = tokenize("red spot near the tip of lower mandible.");
        assert_eq!(t.last().unwrap(), "mandible");
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Ring-billed Gull's -- bill"), ["ring-billed", "gulls", "bill"]);
    }

    #[test]
    fn lexicon_from_catalog() {
        let lex = default_lexicon(&[entry(0, "bill", &["beak"]), entry(1, "eye", &[])]).unwrap();
        assert_eq!(lex.len(), 3);
        let rules = RuleSet::default();
        let beak = parse("a long beak", (0, 1), &lex, &rules).unwrap();
        let bill = parse("a long bill", (0, 1), &lex, &rules).unwrap();
        assert_eq!(beak.segments, bill.segments);
        let dup = default_lexicon(&[entry(0, "bill", &["crown"]), entry(1, "head", &["crown"])]);
        assert!(matches!(dup, Err(Error::DuplicateSurfaceForm(s)) if s == "crown"));
    }

    #[test]
    fn mentions_in_order() {
        let lex = default_lexicon(&[entry(0, "bill", &[]), entry(1, "wing", &[])]).unwrap();
        let p = parse("look at the wing and the bill", (3, 4), &lex, &RuleSet::default()).unwrap();
        assert_eq!(p.segments, vec![1, 0]);
        assert_eq!(p.pair, (3, 4));
        assert!(matches!(
            parse("they differ in overall vibe", (0, 1), &lex, &RuleSet::default()),
            Err(Error::NoSegmentsFound)
        ));
    }

    #[test]
    fn longest_match_wins() {
        let lex = default_lexicon(&[entry(0, "bill", &["mandible", "lower mandible"]), entry(1, "leg", &["lower"])])
            .unwrap();
        let p = parse("red spot on the lower mandible", (0, 1), &lex, &RuleSet::default()).unwrap();
        assert_eq!(p.segments, vec![0]);
    }

    #[test]
    fn rules_extend_surface_forms() {
        let lex = default_lexicon(&[entry(0, "bill", &[]), entry(1, "eye", &[])]).unwrap();
        let rules = RuleSet::default()
            .with_rule("$jaw -> lower mandible")
            .unwrap()
            .with_rule("$jaw -> upper mandible")
            .unwrap()
            .with_rule("$bill -> $jaw")
            .unwrap();
        let p = parse("the upper mandible is hooked", (0, 1), &lex, &rules).unwrap();
        assert_eq!(p.segments, vec![0]);
    }

    #[test]
    fn recursive_rules_rejected() {
        let lex = default_lexicon(&[entry(0, "bill", &[])]).unwrap();
        let rules = RuleSet::default().with_rule("$a -> x $b").unwrap().with_rule("$b -> $a").unwrap();
        assert!(matches!(Parser::new(&lex, &rules), Err(Error::InvalidRules(_))));
        let long = RuleSet::default().with_rule("$bill -> a b c d").unwrap();
        assert!(matches!(Parser::new(&lex, &long), Err(Error::InvalidRules(_))));
    }

    #[test]
    fn strict_policy_rejects_unmatched() {
        let lex = default_lexicon(&[entry(0, "bill", &[])]).unwrap();
        let rules = RuleSet { skip: SkipPolicy::RequireFullCover, ..Default::default() };
        assert!(parse("bill", (0, 1), &lex, &rules).is_ok());
        assert!(matches!(parse("the bill", (0, 1), &lex, &rules), Err(Error::NoSegmentsFound)));
    }

    #[test]
    fn lexicon_json_keeps_file_order() {
        let lex = Lexicon::from_json(r#"{"wing": ["wings"], "bill": ["beak"], "eye": []}"#).unwrap();
        assert_eq!(lex.segment_id("wing"), Some(0));
        assert_eq!(lex.segment_id("eye"), Some(2));
        assert_eq!(lex.len(), 5);
    }
}
