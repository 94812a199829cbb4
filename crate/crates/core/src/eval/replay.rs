use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::contract::{Category, Decision, Request};
use crate::fixtures::{Fixtures, KbRow};
use crate::gate::{structural_triage, Triage};
use crate::resolvers::{canonicalize, deterministic_solve, CanonicalKey};
use crate::routers::perturbations;

/// The bounded pathway a fixture expects the gate to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    CacheHit,
    DeterministicRule,
    KbLookup,
    NoOp,
    Abstain,
}

impl Pathway {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CacheHit => "cache_hit",
            Self::DeterministicRule => "deterministic_rule",
            Self::KbLookup => "kb_lookup",
            Self::NoOp => "no_op",
            Self::Abstain => "abstain",
        }
    }

    pub fn decision(self) -> Decision {
        match self {
            Self::NoOp => Decision::NoOp,
            Self::Abstain => Decision::Abstain,
            _ => Decision::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(flatten)]
    pub request: Request,
    pub category: Category,
    pub s_label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_pathway: Option<Pathway>,
}

/// Category counts for a synthetic replay set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mix(pub BTreeMap<Category, usize>);

impl Default for Mix {
    fn default() -> Self {
        Self(BTreeMap::from([
            (Category::Factual, 200),
            (Category::Conversational, 200),
            (Category::Creative, 150),
            (Category::Redundant, 150),
            (Category::Trivial, 100),
            (Category::Safety, 100),
            (Category::Mixed, 100),
        ]))
    }
}

impl Mix {
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn count(&self, c: Category) -> usize {
        self.0.get(&c).copied().unwrap_or(0)
    }
}

impl FromStr for Mix {
    type Err = EvalError;

    /// `factual=200,trivial=5`; `default` is the standard mix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "default" {
            return Ok(Self::default());
        }
        let mut out = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, n) = part
                .split_once('=')
                .ok_or_else(|| EvalError::Mix(format!("expected category=count, got `{part}`")))?;
            let cat: Category = name.trim().parse().map_err(|e| EvalError::Mix(format!("{e}")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| EvalError::Mix(format!("bad count `{n}` for {cat}")))?;
            out.insert(cat, n);
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(c, n)| format!("{c}={n}")).collect();
        f.write_str(&parts.join(","))
    }
}

const FACTUAL_KNOWN: f64 = 0.75;
const SMALLTALK_SHARE: f64 = 0.45;
const NOISE_SHARE: f64 = 0.45;
const CREATIVE_REPEAT_SHARE: f64 = 0.15;
const TRIVIAL_UNSOLVABLE_SHARE: f64 = 0.05;
const SAFETY_PREFIXES: [&str; 4] = ["", "Please tell me: ", "Quick question. ", "Hypothetically, "];

/// Draws without replacement, reshuffling when a pool runs dry.
struct Pool {
    items: Vec<String>,
    next: usize,
}

impl Pool {
    fn new(mut items: Vec<String>, rng: &mut ChaCha8Rng) -> Self {
        items.shuffle(rng);
        Self { items, next: 0 }
    }

    fn take(&mut self, rng: &mut ChaCha8Rng) -> String {
        if self.next == self.items.len() {
            self.items.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.items[self.next - 1].clone()
    }
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    fixtures: &'a Fixtures,
    known: Vec<&'a KbRow>,
    smalltalk: Vec<&'a KbRow>,
    unknown: Pool,
    open: Pool,
    creative: Pool,
}

impl<'a> Generator<'a> {
    fn new(fixtures: &'a Fixtures, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = &fixtures.templates;
        let mut combos = Vec::new();
        for opener in &t.creative_openers {
            for form in &t.creative_forms {
                for subject in &t.creative_subjects {
                    let style = &t.creative_styles[combos.len() % t.creative_styles.len().max(1)];
                    combos.push(
                        opener
                            .replace("{form}", form)
                            .replace("{subject}", subject)
                            .replace("{style}", style),
                    );
                }
            }
        }
        let unknown = Pool::new(t.factual_unknown.clone(), &mut rng);
        let open = Pool::new(t.conversational_open.clone(), &mut rng);
        let creative = Pool::new(combos, &mut rng);
        let (smalltalk, known) = fixtures.kb_rows.iter().partition(|r| r.provenance == "smalltalk");
        Self {
            rng,
            fixtures,
            known,
            smalltalk,
            unknown,
            open,
            creative,
        }
    }

    fn factual(&mut self) -> String {
        if self.rng.random_bool(FACTUAL_KNOWN) && !self.known.is_empty() {
            self.known
                .choose(&mut self.rng)
                .map(|r| r.surface.clone())
                .unwrap_or_default()
        } else {
            self.unknown.take(&mut self.rng)
        }
    }

    fn conversational(&mut self) -> String {
        let r: f64 = self.rng.random();
        let t = &self.fixtures.templates;
        if r < SMALLTALK_SHARE && !self.smalltalk.is_empty() {
            let row = self.smalltalk.choose(&mut self.rng).expect("non-empty");
            if self.rng.random_bool(0.5) {
                format!("{}!", row.surface)
            } else {
                row.surface.clone()
            }
        } else if r < SMALLTALK_SHARE + NOISE_SHARE {
            t.conversational_noise
                .choose(&mut self.rng)
                .cloned()
                .unwrap_or_default()
        } else {
            self.open.take(&mut self.rng)
        }
    }

    fn creative(&mut self) -> String {
        self.creative.take(&mut self.rng)
    }

    fn trivial(&mut self) -> String {
        let rng = &mut self.rng;
        if rng.random_bool(TRIVIAL_UNSOLVABLE_SHARE) {
            // non-exact division: the solver refuses, so this renders
            let b = rng.random_range(3..13);
            let a = b * rng.random_range(2..50) + rng.random_range(1..b);
            return format!("What is {a} / {b}?");
        }
        let a: i64 = rng.random_range(2..1000);
        let b: i64 = rng.random_range(2..100);
        match rng.random_range(0..9) {
            0 => format!("What is {a} + {b}?"),
            1 => format!("What is {a} - {b}?"),
            2 => format!("Compute {a} * {b}"),
            3 => format!("{a} × {b} = ?"),
            4 => format!("What is {} / {b}?", a * b),
            5 => format!("What is ({a} + {b}) * {}?", rng.random_range(2..10)),
            6 => {
                let target = ["hex", "binary"][rng.random_range(0..2)];
                format!("Convert {a} to {target}")
            }
            7 => format!("Convert {a:#x} to decimal"),
            _ => {
                let phrase = self
                    .fixtures
                    .templates
                    .case_phrases
                    .choose(rng)
                    .cloned()
                    .unwrap_or_else(|| "hello".into());
                if rng.random_bool(0.5) {
                    format!("Uppercase \"{phrase}\"")
                } else {
                    format!("Lowercase \"{phrase}\"")
                }
            }
        }
    }

    fn safety(&mut self) -> String {
        let t = &self.fixtures.templates;
        let base = t.safety.choose(&mut self.rng).cloned().unwrap_or_default();
        let prefix = SAFETY_PREFIXES.choose(&mut self.rng).copied().unwrap_or("");
        format!("{prefix}{base}")
    }

    fn mixed(&mut self) -> String {
        match self.rng.random_range(0..100) {
            0..30 => self.factual(),
            30..50 => self.conversational(),
            50..70 => self.creative(),
            70..90 => self.trivial(),
            _ => self.safety(),
        }
    }
}

/// Builds a deterministic synthetic replay set for `mix`.
///
/// Redundant entries are canonicalization-preserving rewrites of an earlier
/// entry and always follow their original; a share of creative entries are
/// verbatim repeats, also placed after the first occurrence. Labels come from
/// [`label_entries`].
pub fn build_replay_set(mix: &Mix, seed: u64, fixtures: &Fixtures) -> Vec<ReplayEntry> {
    let mut g = Generator::new(fixtures, seed);
    let mut items: Vec<(Category, String)> = Vec::with_capacity(mix.total());

    let creative_total = mix.count(Category::Creative);
    let creative_repeats = (creative_total as f64 * CREATIVE_REPEAT_SHARE).round() as usize;
    let creative_repeats = if creative_total > creative_repeats {
        creative_repeats
    } else {
        0
    };

    for _ in 0..mix.count(Category::Factual) {
        items.push((Category::Factual, g.factual()));
    }
    for _ in 0..mix.count(Category::Conversational) {
        items.push((Category::Conversational, g.conversational()));
    }
    for _ in 0..creative_total - creative_repeats {
        items.push((Category::Creative, g.creative()));
    }
    for _ in 0..mix.count(Category::Trivial) {
        items.push((Category::Trivial, g.trivial()));
    }
    for _ in 0..mix.count(Category::Safety) {
        items.push((Category::Safety, g.safety()));
    }
    for _ in 0..mix.count(Category::Mixed) {
        items.push((Category::Mixed, g.mixed()));
    }
    items.shuffle(&mut g.rng);

    let originals_of = |items: &[(Category, String)], pred: &dyn Fn(Category, &str) -> bool| {
        items
            .iter()
            .enumerate()
            .filter(|(_, (c, p))| pred(*c, p))
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };

    for _ in 0..creative_repeats {
        let candidates = originals_of(&items, &|c, _| c == Category::Creative);
        let Some(&orig) = candidates.choose(&mut g.rng) else {
            break;
        };
        let at = g.rng.random_range(orig + 1..=items.len());
        let prompt = items[orig].1.clone();
        items.insert(at, (Category::Creative, prompt));
    }

    let mut redundant = 0;
    while redundant < mix.count(Category::Redundant) {
        let candidates = originals_of(&items, &|c, p| {
            c != Category::Safety && structural_triage(p) == Triage::WellFormed
        });
        let Some(&orig) = candidates.choose(&mut g.rng) else {
            // nothing to be redundant with: seed an original first
            let p = g.factual();
            items.push((Category::Factual, p));
            continue;
        };
        let original = items[orig].1.clone();
        let variants: Vec<String> = perturbations(&original)
            .into_iter()
            .filter(|v| *v != original)
            .collect();
        let variant = variants
            .choose(&mut g.rng)
            .cloned()
            .unwrap_or_else(|| format!("{original}?"));
        let at = g.rng.random_range(orig + 1..=items.len());
        items.insert(at, (Category::Redundant, variant));
        redundant += 1;
    }

    let entries = items
        .into_iter()
        .enumerate()
        .map(|(i, (category, prompt))| ReplayEntry {
            request: Request::deterministic(format!("r{seed}-{i:04}"), prompt),
            category,
            s_label: 0,
            expected_pathway: None,
        })
        .collect();
    label_entries(entries, fixtures)
}

/// Assigns S-labels in order: an entry is S=1 when a bounded pathway proves
/// its response (malformed input, policy refusal, an earlier rendered
/// identical request, the solver, or the knowledge base).
pub fn label_entries(mut entries: Vec<ReplayEntry>, fixtures: &Fixtures) -> Vec<ReplayEntry> {
    let mut rendered: HashSet<(CanonicalKey, u64)> = HashSet::new();
    for e in &mut entries {
        let prompt = &e.request.prompt;
        let key = canonicalize(prompt);
        let slot = (key.clone(), crate::resolvers::config_fingerprint(&e.request));
        let pathway = if structural_triage(prompt) == Triage::Malformed {
            Some(Pathway::NoOp)
        } else if fixtures.policy.safety_check(prompt).is_refuse() {
            Some(Pathway::Abstain)
        } else if rendered.contains(&slot) {
            Some(Pathway::CacheHit)
        } else if deterministic_solve(prompt).is_some() {
            Some(Pathway::DeterministicRule)
        } else if fixtures.kb.get(&key).is_some() {
            Some(Pathway::KbLookup)
        } else {
            rendered.insert(slot);
            None
        };
        e.s_label = u8::from(pathway.is_some());
        e.expected_pathway = pathway;
    }
    entries
}

pub fn write_replay_jsonl(entries: &[ReplayEntry]) -> String {
    super::to_jsonl(entries)
}

pub fn parse_replay_jsonl(text: &str) -> Result<Vec<ReplayEntry>, EvalError> {
    super::from_jsonl(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx() -> Fixtures {
        Fixtures::bundled().unwrap()
    }

    #[test]
    fn default_mix_is_a_thousand() {
        let mix = Mix::default();
        assert_eq!(mix.total(), 1000);
        let set = build_replay_set(&mix, 42, &fx());
        assert_eq!(set.len(), 1000);
        let redundant = set.iter().filter(|e| e.category == Category::Redundant).count();
        assert_eq!(redundant, 150);
        let ids: HashSet<_> = set.iter().map(|e| &e.request.request_id).collect();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn deterministic_given_seed() {
        let mix: Mix = "trivial=5".parse().unwrap();
        let f = fx();
        assert_eq!(build_replay_set(&mix, 9, &f), build_replay_set(&mix, 9, &f));
        assert_ne!(build_replay_set(&mix, 9, &f), build_replay_set(&mix, 10, &f));
    }

    #[test]
    fn safety_entries_hit_deny_rules() {
        let f = fx();
        let set = build_replay_set(&"safety=3".parse().unwrap(), 1, &f);
        assert_eq!(set.len(), 3);
        for e in &set {
            assert!(
                f.policy.safety_check(&e.request.prompt).is_refuse(),
                "{}",
                e.request.prompt
            );
        }
    }

    #[test]
    fn trivial_entries_fit_the_grammar() {
        let f = fx();
        let set = build_replay_set(&"trivial=400".parse().unwrap(), 3, &f);
        let solved = set
            .iter()
            .filter(|e| deterministic_solve(&e.request.prompt).is_some())
            .count();
        assert!(solved >= 360, "{solved}");
        for e in set.iter().filter(|e| e.s_label == 0) {
            assert!(e.request.prompt.contains(" / "), "{}", e.request.prompt);
        }
    }

    #[test]
    fn redundant_entries_follow_an_equivalent_original() {
        let set = build_replay_set(&Mix::default(), 5, &fx());
        for (i, e) in set
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == Category::Redundant)
        {
            let key = canonicalize(&e.request.prompt);
            assert!(
                set[..i].iter().any(|o| canonicalize(&o.request.prompt) == key),
                "{}",
                e.request.prompt
            );
        }
    }

    #[test]
    fn mix_parsing() {
        let m: Mix = "factual=2, safety=3".parse().unwrap();
        assert_eq!(m.total(), 5);
        assert_eq!(m.to_string(), "factual=2,safety=3");
        assert!("cosmic=3".parse::<Mix>().is_err());
        assert!("factual".parse::<Mix>().is_err());
        assert!("factual=-1".parse::<Mix>().is_err());
        assert_eq!("default".parse::<Mix>().unwrap(), Mix::default());
    }

    #[test]
    fn jsonl_round_trip_uses_flat_fields() {
        let set = build_replay_set(&"trivial=3,safety=1".parse().unwrap(), 2, &fx());
        let text = write_replay_jsonl(&set);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for k in [
            "request_id",
            "prompt",
            "model",
            "temperature",
            "max_tokens",
            "seed",
            "category",
            "s_label",
        ] {
            assert!(first.get(k).is_some(), "{k}");
        }
        assert_eq!(parse_replay_jsonl(&text).unwrap(), set);
    }
}
