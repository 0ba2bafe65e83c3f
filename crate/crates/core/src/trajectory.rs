//! Turns, token streams with model/environment masks, labels, and JSONL storage.
//!
//! One trajectory is stored per line:
//!
//! ```text
//! {"question": {...task...}, "turns": [{"think": [], "search": [e, r], "info": [[s, r, o], ...], "answer": null}, ...],
//!  "label": 0|1, "pivot_labels": [true, false, ...]}
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::world::{score_answer, EntityId, Fact, Query, RelationId, Task};

/// Symbols a think span may carry.
pub const THINK_VOCAB: u32 = 16;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed { line: usize, field: String, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(default)]
    pub think: Vec<u32>,
    pub search: Option<Query>,
    pub info: Option<Vec<Fact>>,
    pub answer: Option<String>,
}

impl Turn {
    pub fn search(think: Vec<u32>, query: Query, info: Vec<Fact>) -> Self {
        Self { think, search: Some(query), info: Some(info), answer: None }
    }

    pub fn answer(think: Vec<u32>, text: impl Into<String>) -> Self {
        Self { think, search: None, info: None, answer: Some(text.into()) }
    }

    pub fn is_answer(&self) -> bool {
        self.answer.is_some()
    }
}

mod zero_one {
    use super::*;

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: Task,
    pub turns: Vec<Turn>,
    /// Outcome label `l`: exact match of the final answer.
    #[serde(with = "zero_one")]
    pub label: bool,
    /// Pivot labels `z`, one per search turn.
    pub pivot_labels: Vec<bool>,
}

impl Trajectory {
    /// Builds a trajectory, deriving the outcome label from the final answer.
    pub fn new(question: Task, turns: Vec<Turn>, pivot_labels: Vec<bool>) -> Self {
        let label = outcome_label(&question, &turns);
        Self { question, turns, label, pivot_labels }
    }

    pub fn num_turns(&self) -> usize {
        self.turns.len()
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.turns.last().and_then(|t| t.answer.as_deref())
    }

    pub fn search_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns.iter().enumerate().filter(|(_, t)| t.search.is_some())
    }

    /// Pivot label for each turn (`None` for non-search turns, or when labels are short).
    pub fn pivot_by_turn(&self) -> Vec<Option<bool>> {
        let mut labels = self.pivot_labels.iter().copied();
        self.turns.iter().map(|t| if t.search.is_some() { labels.next() } else { None }).collect()
    }
}

fn outcome_label(task: &Task, turns: &[Turn]) -> bool {
    match turns.last().and_then(|t| t.answer.as_deref()) {
        Some(ans) => score_answer(ans, &task.answers).map(|s| s.exact_match).unwrap_or(false),
        None => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_turns: usize,
    pub max_think: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_turns: 5, max_think: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    LabelCountMismatch { labels: usize, searches: usize },
    AnswerNotInFinalTurn { turn: usize },
    MissingAnswer,
    TurnBudgetExceeded { turns: usize, max: usize },
    EmptySearchAction { turn: usize },
    SearchAndAnswer { turn: usize },
    DuplicateAnswer { count: usize },
    InfoWithoutSearch { turn: usize },
    ThinkTooLong { turn: usize, len: usize, max: usize },
    OutcomeLabelMismatch,
}

impl Violation {
    /// Violations of the output format (as opposed to annotation errors).
    pub fn is_structural(&self) -> bool {
        !matches!(self, Violation::LabelCountMismatch { .. } | Violation::OutcomeLabelMismatch)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty trajectory"),
            Violation::LabelCountMismatch { labels, searches } => {
                write!(f, "label-count mismatch: {labels} pivot labels for {searches} search turns")
            }
            Violation::AnswerNotInFinalTurn { turn } => write!(f, "answer not in final turn (turn {turn})"),
            Violation::MissingAnswer => write!(f, "missing answer"),
            Violation::TurnBudgetExceeded { turns, max } => write!(f, "turn budget exceeded: {turns} > {max}"),
            Violation::EmptySearchAction { turn } => write!(f, "empty search action (turn {turn})"),
            Violation::SearchAndAnswer { turn } => write!(f, "search and answer in the same turn (turn {turn})"),
            Violation::DuplicateAnswer { count } => write!(f, "duplicate answer spans ({count})"),
            Violation::InfoWithoutSearch { turn } => write!(f, "information without a search (turn {turn})"),
            Violation::ThinkTooLong { turn, len, max } => {
                write!(f, "think span too long (turn {turn}: {len} > {max})")
            }
            Violation::OutcomeLabelMismatch => write!(f, "outcome label disagrees with exact match"),
        }
    }
}

/// Structural checks; an empty result means the trajectory is valid.
pub fn validate_trajectory(traj: &Trajectory, limits: &Limits) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = traj.turns.len();
    if n == 0 {
        out.push(Violation::Empty);
    }
    if n > limits.max_turns {
        out.push(Violation::TurnBudgetExceeded { turns: n, max: limits.max_turns });
    }
    let searches = traj.turns.iter().filter(|t| t.search.is_some()).count();
    if traj.pivot_labels.len() != searches {
        out.push(Violation::LabelCountMismatch { labels: traj.pivot_labels.len(), searches });
    }
    let answers = traj.turns.iter().filter(|t| t.answer.is_some()).count();
    if answers > 1 {
        out.push(Violation::DuplicateAnswer { count: answers });
    }
    for (i, t) in traj.turns.iter().enumerate() {
        let turn = i + 1;
        if t.search.is_some() && t.answer.is_some() {
            out.push(Violation::SearchAndAnswer { turn });
        }
        if t.answer.is_some() && turn != n {
            out.push(Violation::AnswerNotInFinalTurn { turn });
        }
        if t.search.is_none() && t.answer.is_none() {
            out.push(Violation::EmptySearchAction { turn });
        }
        if t.info.is_some() && t.search.is_none() {
            out.push(Violation::InfoWithoutSearch { turn });
        }
        if t.think.len() > limits.max_think {
            out.push(Violation::ThinkTooLong { turn, len: t.think.len(), max: limits.max_think });
        }
    }
    if n > 0 && traj.turns[n - 1].answer.is_none() {
        out.push(Violation::MissingAnswer);
    }
    if traj.label != outcome_label(&traj.question, &traj.turns) {
        out.push(Violation::OutcomeLabelMismatch);
    }
    out
}

/// Control markers of the symbolic vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Marker {
    ThinkOpen = 0,
    ThinkClose = 1,
    SearchOpen = 2,
    SearchClose = 3,
    InfoOpen = 4,
    InfoClose = 5,
    AnswerOpen = 6,
    AnswerClose = 7,
    Unknown = 8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Model,
    Env,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub source: Source,
}

/// Integer layout: markers, think symbols, relations, then entities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub num_relations: u32,
    pub num_entities: u32,
}

impl Vocabulary {
    pub const THINK_BASE: u32 = 9;
    pub const RELATION_BASE: u32 = Self::THINK_BASE + THINK_VOCAB;

    pub fn new(num_relations: usize, num_entities: usize) -> Self {
        Self { num_relations: num_relations as u32, num_entities: num_entities as u32 }
    }

    pub fn size(&self) -> u32 {
        Self::RELATION_BASE + self.num_relations + self.num_entities
    }

    pub fn marker(m: Marker) -> u32 {
        m as u32
    }

    pub fn think(&self, sym: u32) -> u32 {
        if sym < THINK_VOCAB {
            Self::THINK_BASE + sym
        } else {
            Marker::Unknown as u32
        }
    }

    pub fn relation(&self, r: RelationId) -> u32 {
        if r.0 < self.num_relations {
            Self::RELATION_BASE + r.0
        } else {
            Marker::Unknown as u32
        }
    }

    pub fn entity(&self, e: EntityId) -> u32 {
        if e.0 < self.num_entities {
            Self::RELATION_BASE + self.num_relations + e.0
        } else {
            Marker::Unknown as u32
        }
    }

    /// Answer text as symbols: a canonical entity name maps to its entity token,
    /// anything else to one unknown symbol per word.
    pub fn answer(&self, text: &str) -> Vec<u32> {
        match EntityId::parse_label(text) {
            Some(e) if e.0 < self.num_entities => vec![self.entity(e)],
            _ => text.split_whitespace().map(|_| Marker::Unknown as u32).collect(),
        }
    }
}

/// Token positions of one turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TurnSpan {
    pub start: usize,
    pub end: usize,
    /// Index of the opening search/answer marker.
    pub action_open: usize,
    /// Turn-final model token: search close or answer close.
    pub anchor: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedTrajectory {
    pub tokens: Vec<Token>,
    /// `I(y)`: 1 for model tokens, 0 for retrieved ones.
    pub mask: Vec<u8>,
    /// 0-based turn index of every token.
    pub turn_of: Vec<usize>,
    pub spans: Vec<TurnSpan>,
}

impl TokenizedTrajectory {
    pub fn masked_in(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }

    pub fn anchors(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.anchor).collect()
    }
}

/// Flattens turns into a token stream and its loss mask.
///
/// Turns that have neither a search nor an answer are given no anchor and
/// their span's `anchor` points at the last model token emitted, if any.
pub fn tokenize_with_mask(traj: &Trajectory, vocab: &Vocabulary) -> TokenizedTrajectory {
    tokenize_turns(&traj.turns, vocab)
}

pub fn tokenize_turns(turns: &[Turn], vocab: &Vocabulary) -> TokenizedTrajectory {
    let mut tokens: Vec<Token> = Vec::new();
    let mut turn_of = Vec::new();
    let mut spans = Vec::with_capacity(turns.len());
    let model = Source::Model;
    for (ti, turn) in turns.iter().enumerate() {
        let start = tokens.len();
        let mut ids: Vec<(u32, Source)> = Vec::new();
        let mut action_open = None;
        let mut anchor = None;
        if !turn.think.is_empty() {
            ids.push((Marker::ThinkOpen as u32, model));
            ids.extend(turn.think.iter().map(|&s| (vocab.think(s), model)));
            ids.push((Marker::ThinkClose as u32, model));
        }
        if let Some(q) = turn.search {
            action_open = Some(start + ids.len());
            ids.push((Marker::SearchOpen as u32, model));
            ids.push((vocab.entity(q.entity), model));
            ids.push((vocab.relation(q.relation), model));
            anchor = Some(start + ids.len());
            ids.push((Marker::SearchClose as u32, model));
        }
        if let Some(info) = &turn.info {
            ids.push((Marker::InfoOpen as u32, Source::Env));
            for f in info {
                ids.push((vocab.entity(f.subject), Source::Env));
                ids.push((vocab.relation(f.relation), Source::Env));
                ids.push((vocab.entity(f.object), Source::Env));
            }
            ids.push((Marker::InfoClose as u32, Source::Env));
        }
        if let Some(ans) = &turn.answer {
            action_open = Some(start + ids.len());
            ids.push((Marker::AnswerOpen as u32, model));
            ids.extend(vocab.answer(ans).into_iter().map(|id| (id, model)));
            anchor = Some(start + ids.len());
            ids.push((Marker::AnswerClose as u32, model));
        }
        let last_model = ids.iter().rposition(|&(_, s)| s == model).map(|i| start + i);
        tokens.extend(ids.iter().map(|&(id, source)| Token { id, source }));
        turn_of.extend(std::iter::repeat_n(ti, ids.len()));
        let anchor = anchor.or(last_model).unwrap_or(start);
        spans.push(TurnSpan { start, end: tokens.len(), action_open: action_open.unwrap_or(anchor), anchor });
    }
    let mask = tokens.iter().map(|t| u8::from(t.source == Source::Model)).collect();
    TokenizedTrajectory { tokens, mask, turn_of, spans }
}

/// Training corpus `D`; the pivot set is implied by the `pivot_labels` flags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `(trajectory index, turn index)` of every pivot step.
    pub fn pivot_set(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, t) in self.trajectories.iter().enumerate() {
            for (ti, z) in t.pivot_by_turn().into_iter().enumerate() {
                if z == Some(true) {
                    out.push((i, ti));
                }
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for t in &self.trajectories {
            s.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, TrajectoryError> {
        let mut trajectories = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| TrajectoryError::Malformed {
                line: line_no,
                field: String::new(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            trajectories.push(parse_record(&line, line_no)?);
        }
        Ok(Self { trajectories })
    }
}

pub fn parse_record(line: &str, line_no: usize) -> Result<Trajectory, TrajectoryError> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        // Missing keys are reported on the parent; name the key itself.
        let field = match message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(key) if path == "." => key.to_string(),
            Some(key) => format!("{path}.{key}"),
            None => path,
        };
        TrajectoryError::Malformed { line: line_no, field, message }
    })
}

pub fn persist(dataset: &Dataset, path: &Path) -> Result<(), TrajectoryError> {
    let io = |source| TrajectoryError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(dataset.to_jsonl().as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<Dataset, TrajectoryError> {
    let f = File::open(path).map_err(|source| TrajectoryError::Io { path: path.display().to_string(), source })?;
    Dataset::from_jsonl(BufReader::new(f))
}

/// Hand-written two-hop trajectory in the shape of an alma-mater question:
/// who is the person's alma mater, then when did it start issuing degrees.
pub fn alma_mater_fixture() -> (crate::world::KnowledgeWorld, Trajectory) {
    use crate::world::KnowledgeWorld;
    let entities = ["William C. Perry", "University of Kansas", "1873", "Perry Belmont", "1866", "Lawrence"];
    let relations = ["alma mater", "engineering degrees since", "located in"];
    let f = |s, r, o| Fact::new(EntityId(s), RelationId(r), EntityId(o));
    let facts = vec![f(0, 0, 1), f(1, 1, 2), f(3, 0, 5), f(5, 1, 4), f(1, 2, 5)];
    let world = KnowledgeWorld::from_parts(
        entities.iter().map(|s| s.to_string()).collect(),
        relations.iter().map(|s| s.to_string()).collect(),
        facts.clone(),
        0,
        2,
    )
    .expect("fixture world is well formed");
    let task = Task::from_chain(&world, &facts[..2]);
    let turns = vec![
        Turn::search(vec![1, 2], task.golden_sub_queries[0], vec![facts[0], facts[2], facts[4]]),
        Turn::search(vec![3], task.golden_sub_queries[1], vec![facts[1], facts[3], facts[4]]),
        Turn::answer(vec![], "1873"),
    ];
    (world, Trajectory::new(task, turns, vec![true, true]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{label_pivots, PivotRule};

    #[test]
    fn fixture_is_valid_and_correct() {
        let (world, t) = alma_mater_fixture();
        assert!(validate_trajectory(&t, &Limits::default()).is_empty());
        assert!(t.label);
        assert_eq!(label_pivots(&t.question, &t.turns, PivotRule::Strict), t.pivot_labels);
        t.question.check(&world).unwrap();
    }

    #[test]
    fn answer_only_trajectory_is_fully_masked_in() {
        let (_, mut t) = alma_mater_fixture();
        t.turns = vec![Turn::answer(vec![], "1873")];
        t.pivot_labels.clear();
        let tok = tokenize_with_mask(&t, &Vocabulary::new(3, 6));
        assert!(tok.mask.iter().all(|&m| m == 1));
        assert_eq!(tok.spans[0].anchor, tok.tokens.len() - 1);
    }

    #[test]
    fn info_span_is_masked_out() {
        let (_, t) = alma_mater_fixture();
        let mut one = t.clone();
        one.turns = vec![t.turns[0].clone(), Turn::answer(vec![], "x")];
        one.pivot_labels = vec![true];
        let tok = tokenize_with_mask(&one, &Vocabulary::new(3, 6));
        let open = tok.tokens.iter().position(|x| x.id == Marker::InfoOpen as u32).unwrap();
        let close = tok.tokens.iter().position(|x| x.id == Marker::InfoClose as u32).unwrap();
        assert_eq!(close - open + 1, 3 * 3 + 2);
        for (i, &m) in tok.mask.iter().enumerate() {
            assert_eq!(m == 0, (open..=close).contains(&i), "token {i}");
        }
        assert_eq!(tok.tokens[tok.spans[0].anchor].id, Marker::SearchClose as u32);
    }

    #[test]
    fn label_count_mismatch_is_flagged() {
        let (_, mut t) = alma_mater_fixture();
        let extra = t.turns[0].clone();
        t.turns.insert(0, extra);
        let v = validate_trajectory(&t, &Limits::default());
        assert_eq!(v, vec![Violation::LabelCountMismatch { labels: 2, searches: 3 }]);
        assert!(v[0].to_string().starts_with("label-count mismatch"));
    }

    #[test]
    fn turn_budget_is_enforced() {
        let (_, mut t) = alma_mater_fixture();
        let s = t.turns[0].clone();
        t.turns = vec![s.clone(), s.clone(), s.clone(), s.clone(), s, Turn::answer(vec![], "1873")];
        t.pivot_labels = vec![true, false, false, false, false];
        let v = validate_trajectory(&t, &Limits { max_turns: 5, max_think: 4 });
        assert_eq!(v, vec![Violation::TurnBudgetExceeded { turns: 6, max: 5 }]);
        assert_eq!(v[0].to_string(), "turn budget exceeded: 6 > 5");
    }

    #[test]
    fn misplaced_and_duplicate_answers_are_flagged() {
        let (_, mut t) = alma_mater_fixture();
        t.turns.insert(1, Turn::answer(vec![], "1873"));
        let v = validate_trajectory(&t, &Limits::default());
        assert!(v.contains(&Violation::DuplicateAnswer { count: 2 }));
        assert!(v.contains(&Violation::AnswerNotInFinalTurn { turn: 2 }));

        let (_, mut t) = alma_mater_fixture();
        t.turns.pop();
        let v = validate_trajectory(&t, &Limits::default());
        assert!(v.contains(&Violation::MissingAnswer));
        assert!(v.contains(&Violation::OutcomeLabelMismatch));
    }

    #[test]
    fn empty_search_action_is_flagged() {
        let (_, mut t) = alma_mater_fixture();
        t.turns[0].search = None;
        t.pivot_labels = vec![true];
        let v = validate_trajectory(&t, &Limits::default());
        assert!(v.contains(&Violation::EmptySearchAction { turn: 1 }));
    }

    #[test]
    fn validation_is_idempotent() {
        let (_, mut t) = alma_mater_fixture();
        t.pivot_labels.push(false);
        let before = t.clone();
        let a = validate_trajectory(&t, &Limits::default());
        let b = validate_trajectory(&t, &Limits::default());
        assert_eq!(a, b);
        assert_eq!(t, before);
    }

    #[test]
    fn missing_label_names_line_and_field() {
        let (_, t) = alma_mater_fixture();
        let good = serde_json::to_string(&t).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v.as_object_mut().unwrap().remove("label");
        let text = format!("{good}\n{good}\n{}\n", serde_json::to_string(&v).unwrap());
        let err = Dataset::from_jsonl(text.as_bytes()).unwrap_err();
        match err {
            TrajectoryError::Malformed { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_type_errors_carry_their_path() {
        let (_, t) = alma_mater_fixture();
        let mut v = serde_json::to_value(&t).unwrap();
        v["turns"][1]["search"] = serde_json::json!(["x", 1]);
        let err = Dataset::from_jsonl(serde_json::to_string(&v).unwrap().as_bytes()).unwrap_err();
        let TrajectoryError::Malformed { line, field, .. } = err else { panic!() };
        assert_eq!(line, 1);
        assert!(field.starts_with("turns[1].search"), "{field}");
    }

    #[test]
    fn schema_keys_are_fixed() {
        let (_, t) = alma_mater_fixture();
        let v = serde_json::to_value(&t).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["label", "pivot_labels", "question", "turns"]);
        assert_eq!(v["label"], 1);
        assert_eq!(v["turns"][0]["search"], serde_json::json!([0, 0]));
        assert_eq!(v["turns"][2]["search"], serde_json::Value::Null);
        assert_eq!(v["turns"][2]["answer"], "1873");
    }
}
