//! Append-only pairwise judgment store.
//!
//! Pairs are sequences that start from the same view (equal first-frame
//! hash). Each accepted judgment is one JSONL line, fsynced before the call
//! returns. Corrections go through [`AnnotationStore::supersede`], which
//! appends a line naming the judgment it replaces; nothing is rewritten.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Manifest;
use crate::preference::{write_judgments_jsonl, Dimension, Judgment, Outcome, PreferenceError};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("store has no pairs to annotate")]
    NotInitialized,
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("{0} already judged pair {1:?} on {2}")]
    Conflict(String, String, Dimension),
    #[error("outcome must be A_WINS, B_WINS or TIE, got {0:?}")]
    BadOutcome(String),
    #[error("dimension must be VQ, MQ or CA, got {0:?}")]
    BadDimension(String),
    #[error("items {got:?} do not match pair {pair_id:?}")]
    ItemMismatch { pair_id: String, got: (String, String) },
    #[error("annotator id must not be empty")]
    EmptyAnnotator,
    #[error("no judgment by {0} on pair {1:?} / {2} to supersede")]
    NothingToSupersede(String, String, Dimension),
    #[error("sequences {0:?} and {1:?} do not share a first frame")]
    Unpaired(String, String),
    #[error("duplicate pair id {0:?}")]
    DuplicatePair(String),
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AnnotationError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair_id: String,
    pub seq_a: String,
    pub seq_b: String,
    pub frames_a: usize,
    pub frames_b: usize,
    pub first_frame_hash: String,
}

/// Every two-element combination of records that share a first frame, in id
/// order. Pair ids are `"{seq_a}__{seq_b}"`.
pub fn pairs_from_manifest(m: &Manifest) -> Vec<PairSpec> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        groups.entry(r.first_frame_hash.as_str()).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for idx in groups.values() {
        for (n, &i) in idx.iter().enumerate() {
            for &j in &idx[n + 1..] {
                let (a, b) = (&m.records[i], &m.records[j]);
                pairs.push(PairSpec {
                    pair_id: format!("{}__{}", a.id, b.id),
                    seq_a: a.id.clone(),
                    seq_b: b.id.clone(),
                    frames_a: a.frame_count,
                    frames_b: b.frame_count,
                    first_frame_hash: a.first_frame_hash.clone(),
                });
            }
        }
    }
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    pairs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTask {
    pub pair_id: String,
    pub seq_a: String,
    pub seq_b: String,
    /// Dimensions this annotator has not judged on this pair yet.
    pub dimensions_pending: Vec<Dimension>,
    pub frames_a: usize,
    pub frames_b: usize,
}

/// A judgment as received over the wire. Dimension and outcome are kept as
/// strings so that bad values map to their own errors; items default to the
/// pair's sequences and the timestamp to the current time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub pair_id: String,
    #[serde(default)]
    pub item_a: Option<String>,
    #[serde(default)]
    pub item_b: Option<String>,
    pub dimension: String,
    pub outcome: String,
    pub annotator_id: String,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JudgmentKey {
    pub pair_id: String,
    pub dimension: Dimension,
    pub annotator_id: String,
}

impl JudgmentKey {
    pub fn of(j: &Judgment) -> Self {
        JudgmentKey {
            pair_id: j.pair_id.clone(),
            dimension: j.dimension,
            annotator_id: j.annotator_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum StoreLine {
    Supersede { supersedes: JudgmentKey, replacement: Judgment },
    Judgment(Judgment),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionProgress {
    /// Pairs with at least one judgment.
    pub judged: usize,
    pub total: usize,
    /// Active judgments across all annotators.
    pub judgments: usize,
    pub histogram: BTreeMap<Outcome, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub dimensions: BTreeMap<Dimension, DimensionProgress>,
    pub annotators: usize,
    /// Lines in the log, superseding lines included.
    pub lines: usize,
}

struct State {
    writer: BufWriter<File>,
    /// Active judgment per key with the log position that made it active.
    active: BTreeMap<JudgmentKey, (usize, Judgment)>,
    lines: usize,
}

pub struct AnnotationStore {
    path: PathBuf,
    pairs: BTreeMap<String, PairSpec>,
    state: RwLock<State>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl AnnotationStore {
    /// Open (or create) the log at `path` for the given pairs, replaying any
    /// existing lines. A torn final line without a newline is truncated.
    pub fn open(path: impl AsRef<Path>, pairs: Vec<PairSpec>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if pairs.is_empty() {
            return Err(AnnotationError::NotInitialized);
        }
        let mut by_id = BTreeMap::new();
        for p in pairs {
            if p.seq_a == p.seq_b {
                return Err(AnnotationError::Unpaired(p.seq_a, p.seq_b));
            }
            if let Some(old) = by_id.insert(p.pair_id.clone(), p) {
                return Err(AnnotationError::DuplicatePair(old.pair_id));
            }
        }
        let io = |source| AnnotationError::Io { path: path.clone(), source };

        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut active = BTreeMap::new();
        let mut lines = 0;
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(io)?;
            let complete = text.rfind('\n').map_or(0, |i| i + 1);
            if complete < text.len() {
                OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .and_then(|f| f.set_len(complete as u64).and_then(|_| f.sync_all()))
                    .map_err(io)?;
            }
            for (n, line) in text[..complete].lines().enumerate() {
                let corrupt = |message: String| AnnotationError::Corrupt { path: path.clone(), line: n + 1, message };
                let parsed: StoreLine = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
                match parsed {
                    StoreLine::Judgment(j) => {
                        if active.insert(JudgmentKey::of(&j), (n, j)).is_some() {
                            return Err(corrupt("duplicate judgment".into()));
                        }
                    }
                    StoreLine::Supersede { supersedes, replacement } => {
                        if active.remove(&supersedes).is_none() || JudgmentKey::of(&replacement) != supersedes {
                            return Err(corrupt("supersede without a matching judgment".into()));
                        }
                        active.insert(supersedes, (n, replacement));
                    }
                }
                lines = n + 1;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(AnnotationStore {
            path,
            pairs: by_id,
            state: RwLock::new(State { writer: BufWriter::new(file), active, lines }),
        })
    }

    pub fn open_for_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<Self> {
        Self::open(path, pairs_from_manifest(manifest))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairSpec> {
        self.pairs.values()
    }

    pub fn pair(&self, id: &str) -> Option<&PairSpec> {
        self.pairs.get(id)
    }

    /// The unjudged pair for this annotator with the fewest judgments on
    /// `dimension`, ties broken by pair id. `None` when exhausted.
    pub fn next_pair(&self, dimension: Dimension, annotator_id: &str) -> Result<Option<PairTask>> {
        let st = self.state.read().expect("store lock poisoned");
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut mine: BTreeSet<(&str, Dimension)> = BTreeSet::new();
        for k in st.active.keys() {
            if k.dimension == dimension {
                *counts.entry(k.pair_id.as_str()).or_insert(0) += 1;
            }
            if k.annotator_id == annotator_id {
                mine.insert((k.pair_id.as_str(), k.dimension));
            }
        }
        let best = self
            .pairs
            .values()
            .filter(|p| !mine.contains(&(p.pair_id.as_str(), dimension)))
            .min_by_key(|p| (counts.get(p.pair_id.as_str()).copied().unwrap_or(0), p.pair_id.as_str()));
        Ok(best.map(|p| PairTask {
            pair_id: p.pair_id.clone(),
            seq_a: p.seq_a.clone(),
            seq_b: p.seq_b.clone(),
            dimensions_pending: Dimension::ALL
                .into_iter()
                .filter(|d| !mine.contains(&(p.pair_id.as_str(), *d)))
                .collect(),
            frames_a: p.frames_a,
            frames_b: p.frames_b,
        }))
    }

    fn check(&self, j: &Judgment) -> Result<()> {
        let p = self.pairs.get(&j.pair_id).ok_or_else(|| AnnotationError::UnknownPair(j.pair_id.clone()))?;
        let same = j.item_a == p.seq_a && j.item_b == p.seq_b;
        let swapped = j.item_a == p.seq_b && j.item_b == p.seq_a;
        if !(same || swapped) {
            return Err(AnnotationError::ItemMismatch {
                pair_id: j.pair_id.clone(),
                got: (j.item_a.clone(), j.item_b.clone()),
            });
        }
        if j.annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        Ok(())
    }

    /// Turn a wire submission into a judgment, filling defaults.
    pub fn resolve(&self, s: &Submission) -> Result<Judgment> {
        let dimension: Dimension = s.dimension.parse().map_err(|_| AnnotationError::BadDimension(s.dimension.clone()))?;
        let outcome: Outcome = s.outcome.parse().map_err(|_| AnnotationError::BadOutcome(s.outcome.clone()))?;
        let p = self.pairs.get(&s.pair_id).ok_or_else(|| AnnotationError::UnknownPair(s.pair_id.clone()))?;
        let j = Judgment {
            pair_id: s.pair_id.clone(),
            item_a: s.item_a.clone().unwrap_or_else(|| p.seq_a.clone()),
            item_b: s.item_b.clone().unwrap_or_else(|| p.seq_b.clone()),
            dimension,
            outcome,
            annotator_id: s.annotator_id.clone(),
            timestamp: s.timestamp.unwrap_or_else(now_secs),
        };
        self.check(&j)?;
        Ok(j)
    }

    fn append(&self, st: &mut State, line: &StoreLine) -> Result<()> {
        let io = |source| AnnotationError::Io { path: self.path.clone(), source };
        let mut buf = serde_json::to_vec(line).expect("plain data serializes");
        buf.push(b'\n');
        st.writer.write_all(&buf).map_err(io)?;
        st.writer.flush().map_err(io)?;
        st.writer.get_ref().sync_data().map_err(io)?;
        st.lines += 1;
        Ok(())
    }

    /// Durably append `j`. Rejects a second judgment for the same pair,
    /// dimension and annotator with [`AnnotationError::Conflict`].
    pub fn submit(&self, j: Judgment) -> Result<()> {
        self.check(&j)?;
        let mut st = self.state.write().expect("store lock poisoned");
        let key = JudgmentKey::of(&j);
        if st.active.contains_key(&key) {
            return Err(AnnotationError::Conflict(key.annotator_id, key.pair_id, key.dimension));
        }
        let line = StoreLine::Judgment(j);
        self.append(&mut st, &line)?;
        let StoreLine::Judgment(j) = line else { unreachable!() };
        let pos = st.lines - 1;
        st.active.insert(key, (pos, j));
        Ok(())
    }

    pub fn submit_raw(&self, s: &Submission) -> Result<Judgment> {
        let j = self.resolve(s)?;
        self.submit(j.clone())?;
        Ok(j)
    }

    /// Replace this annotator's existing judgment with `replacement`
    /// (same pair, dimension and annotator).
    pub fn supersede(&self, replacement: Judgment) -> Result<()> {
        self.check(&replacement)?;
        let mut st = self.state.write().expect("store lock poisoned");
        let key = JudgmentKey::of(&replacement);
        if !st.active.contains_key(&key) {
            return Err(AnnotationError::NothingToSupersede(key.annotator_id, key.pair_id, key.dimension));
        }
        let line = StoreLine::Supersede { supersedes: key.clone(), replacement };
        self.append(&mut st, &line)?;
        let StoreLine::Supersede { replacement, .. } = line else { unreachable!() };
        let pos = st.lines - 1;
        st.active.insert(key, (pos, replacement));
        Ok(())
    }

    pub fn supersede_raw(&self, s: &Submission) -> Result<Judgment> {
        let j = self.resolve(s)?;
        self.supersede(j.clone())?;
        Ok(j)
    }

    /// Active judgments in the order they became active.
    pub fn judgments(&self) -> Vec<Judgment> {
        let st = self.state.read().expect("store lock poisoned");
        let mut v: Vec<_> = st.active.values().collect();
        v.sort_by_key(|(pos, _)| *pos);
        v.into_iter().map(|(_, j)| j.clone()).collect()
    }

    /// Active judgments as plain judgment JSONL, readable by
    /// [`crate::preference::read_judgments_jsonl`].
    pub fn export(&self, writer: impl Write) -> std::result::Result<(), PreferenceError> {
        write_judgments_jsonl(writer, &self.judgments())
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn progress(&self) -> Progress {
        let st = self.state.read().expect("store lock poisoned");
        let mut dims: BTreeMap<Dimension, DimensionProgress> = Dimension::ALL
            .into_iter()
            .map(|d| {
                (
                    d,
                    DimensionProgress {
                        total: self.pairs.len(),
                        histogram: Outcome::ALL.into_iter().map(|o| (o, 0)).collect(),
                        ..DimensionProgress::default()
                    },
                )
            })
            .collect();
        let mut judged: BTreeSet<(&str, Dimension)> = BTreeSet::new();
        let mut annotators = BTreeSet::new();
        for (k, (_, j)) in &st.active {
            let d = dims.get_mut(&k.dimension).expect("all dimensions present");
            d.judgments += 1;
            *d.histogram.entry(j.outcome).or_insert(0) += 1;
            judged.insert((k.pair_id.as_str(), k.dimension));
            annotators.insert(k.annotator_id.as_str());
        }
        for (_, d) in judged {
            dims.get_mut(&d).expect("all dimensions present").judged += 1;
        }
        Progress { dimensions: dims, annotators: annotators.len(), lines: st.lines }
    }
}

/// Annotator rubric served to the review UI.
pub const GUIDELINES: &str = "\
Annotation guidelines
=====================

Each task shows two videos, A and B, that start from the same view. For the
active dimension pick A wins, Tie, or B wins. Judge only that dimension;
another dimension may favour the other video.

VQ  Visual quality
    Judge each frame on its own: sharpness, noise, exposure, artifacts,
    distortion at the borders. Ignore how the camera moves.

MQ  Motion quality
    Judge the camera movement: smooth steady motion beats jitter, sudden
    jumps, drifting or a camera that barely moves. Overly fast or large
    swings are a defect.

CA  Composition aesthetic
    Judge how the framing develops from the first view to the last and how
    good the final framing is. Sub-dimensions to weigh:
      Layering Complexity        depth through foreground, middle and background
      Geometric Harmony          lines and shapes that organise the frame
      Color Relationships        colour blocks and contrast guiding the eye
      Frame Utilization          use of edges and corners, support for the subject
      Visual Rhythm              repetition and flow of elements
      Juxtaposition Development  relations between elements across the video

CA key points
    Compositional Reasonableness  balanced and sensible
    Compositional Clarity         elements are clear and organised
    Compositional Detail          care in how elements relate
    Compositional Creativity      pleasing, inventive arrangement
    Compositional Safety          no uncomfortable tension for the viewer

Use Tie when the two are genuinely indistinguishable on the dimension, not
as a fallback for hard calls.
";
