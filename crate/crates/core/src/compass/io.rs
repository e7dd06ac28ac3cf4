//! Model directories.
//!
//! ```text
//! model/
//!   metadata.json      mode, config, vocabulary, slice counts, checksums
//!   compass_c.txt
//!   compass_u.txt
//!   slice_18.txt ... slice_36.txt
//! ```
//!
//! Matrix files start with a `<vocab_size> <dim>` header followed by one
//! `<token> <v1> ... <vd>` line per vocabulary id. Values are written in
//! shortest round-trip form, so a load reproduces every bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompassConfig, DiachronicModel, SliceRecord, TrainingMode};
use crate::corpus::SpeakerFilter;
use crate::error::{Error, Result};
use crate::trainer::{EmbeddingMatrix, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;

const METADATA: &str = "metadata.json";
const COMPASS_C: &str = "compass_c.txt";
const COMPASS_U: &str = "compass_u.txt";

fn slice_file(month: u32) -> String {
    format!("slice_{month}.txt")
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    mode: Option<TrainingMode>,
    speaker: SpeakerFilter,
    seed: u64,
    config: CompassConfig,
    months: Vec<u32>,
    vocabulary: Vec<(String, u64)>,
    /// month -> [(id, count)] for words present in that month.
    slice_counts: BTreeMap<u32, Vec<(u32, u64)>>,
    slice_tokens: BTreeMap<u32, u64>,
    records: Vec<SliceRecord>,
    /// file name -> SHA-256 hex digest.
    checksums: BTreeMap<String, String>,
}

/// Serializes one matrix in the embedding text format.
pub fn format_embeddings(vocab: &Vocabulary, m: &EmbeddingMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * (m.dim() * 22 + 16));
    let _ = writeln!(out, "{} {}", m.rows(), m.dim());
    for (id, word) in vocab.words().iter().enumerate() {
        out.push_str(word);
        for v in m.row(id) {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_embeddings(path: &Path, vocab: &Vocabulary, m: &EmbeddingMatrix) -> Result<String> {
    let text = format_embeddings(vocab, m);
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Parses an embedding file into its tokens and matrix.
pub fn parse_embeddings(text: &str, path: &Path) -> Result<(Vec<String>, EmbeddingMatrix)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut parts = header.split(' ');
    let (rows, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(r), Some(d), None) => (
            r.parse::<usize>()
                .map_err(|_| Error::parse(path, 1, "bad vocabulary size"))?,
            d.parse::<usize>().map_err(|_| Error::parse(path, 1, "bad dimension"))?,
        ),
        _ => return Err(Error::parse(path, 1, "header must be `<vocab_size> <dim>`")),
    };
    let mut words = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let mut fields = line.split(' ');
        let word = fields
            .next()
            .filter(|w| !w.is_empty())
            .ok_or_else(|| Error::parse(path, lineno, "missing token"))?;
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value {f:?}")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        words.push(word.to_string());
    }
    if words.len() != rows {
        return Err(Error::parse(
            path,
            rows + 1,
            format!("header announces {rows} rows but file has {}", words.len()),
        ));
    }
    Ok((words, EmbeddingMatrix::from_vec(rows, dim, data)?))
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, EmbeddingMatrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes a model into `dir`, creating it if needed.
pub fn save_model(model: &DiachronicModel, dir: &Path) -> Result<()> {
    model.check_invariants()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = &model.vocabulary;
    let mut checksums = BTreeMap::new();
    checksums.insert(
        COMPASS_C.to_string(),
        write_embeddings(&dir.join(COMPASS_C), vocab, &model.compass_c)?,
    );
    checksums.insert(
        COMPASS_U.to_string(),
        write_embeddings(&dir.join(COMPASS_U), vocab, &model.compass_u)?,
    );
    for (&month, m) in &model.slices {
        let name = slice_file(month);
        checksums.insert(name.clone(), write_embeddings(&dir.join(&name), vocab, m)?);
    }
    let meta = Metadata {
        format_version: FORMAT_VERSION,
        mode: model.mode,
        speaker: model.speaker,
        seed: model.seed(),
        config: model.config.clone(),
        months: model.slices.keys().copied().collect(),
        vocabulary: vocab
            .words()
            .iter()
            .cloned()
            .zip(vocab.counts().iter().copied())
            .collect(),
        slice_counts: model
            .slice_counts
            .iter()
            .map(|(&m, c)| (m, c.iter().map(|(&id, &n)| (id, n)).collect()))
            .collect(),
        slice_tokens: model.slice_tokens.clone(),
        records: model.records.clone(),
        checksums,
    };
    let path = dir.join(METADATA);
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a model directory, verifying format version and checksums.
pub fn load_model(dir: &Path) -> Result<DiachronicModel> {
    let meta_path = dir.join(METADATA);
    if !meta_path.exists() {
        return Err(Error::MissingFile(meta_path));
    }
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let version: serde_json::Value = serde_json::from_str(&text)?;
    let found = version.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let meta: Metadata = serde_json::from_str(&text)?;

    let vocabulary = Vocabulary::from_counts(meta.vocabulary.iter().cloned(), 1)?;
    if vocabulary.words().iter().ne(meta.vocabulary.iter().map(|(w, _)| w)) {
        return Err(Error::Model("vocabulary in metadata is not in canonical order".into()));
    }

    let load = |name: &str| -> Result<EmbeddingMatrix> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = meta
            .checksums
            .get(name)
            .ok_or_else(|| Error::Model(format!("no checksum recorded for {name}")))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::Checksum { file: name.to_string() });
        }
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(&path, 0, "file is not UTF-8"))?;
        let (words, m) = parse_embeddings(&text, &path)?;
        if words != vocabulary.words() {
            return Err(Error::Model(format!("{name}: tokens differ from the vocabulary")));
        }
        Ok(m)
    };

    let compass_c = load(COMPASS_C)?;
    let compass_u = load(COMPASS_U)?;
    let mut slices = BTreeMap::new();
    for &month in &meta.months {
        slices.insert(month, load(&slice_file(month))?);
    }
    let model = DiachronicModel {
        vocabulary,
        compass_c,
        compass_u,
        slices,
        slice_counts: meta
            .slice_counts
            .into_iter()
            .map(|(m, c)| (m, c.into_iter().collect()))
            .collect(),
        slice_tokens: meta.slice_tokens,
        mode: meta.mode,
        speaker: meta.speaker,
        config: meta.config,
        records: meta.records,
    };
    model.check_invariants()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compass::{train_diachronic, CompassConfig};
    use crate::corpus::{AgeRange, SlicedCorpus, SpeakerRole, Utterance};
    use crate::trainer::TrainConfig;
    use proptest::prelude::*;

    fn model() -> DiachronicModel {
        let utts = (0..30).map(|i| Utterance {
            speaker_role: SpeakerRole::Child,
            tokens: ["the", "dog", "ran", "[NAME]", "ball"][..2 + i % 4]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            child_age_months: 18 + (i % 3) as u32,
        });
        let corpus = SlicedCorpus::from_utterances(
            crate::corpus::SpeakerFilter::ChildSpeech,
            AgeRange::new(18, 20).unwrap(),
            utts,
        )
        .unwrap();
        let cfg = CompassConfig {
            train: TrainConfig {
                dim: 5,
                window: 2,
                negatives: 2,
                epochs: 2,
                min_count: 1,
                ..TrainConfig::default()
            },
            ..CompassConfig::default()
        };
        train_diachronic(&corpus, &cfg, TrainingMode::Incremental).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert!(loaded.compass_c.bit_eq(&m.compass_c));
        assert!(loaded.compass_u.bit_eq(&m.compass_u));
        for (month, s) in &m.slices {
            assert!(loaded.slices[month].bit_eq(s));
        }
        assert_eq!(loaded, m);
        let files = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 3 + 3);
    }

    #[test]
    fn tampered_slice_fails_checksum() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let path = dir.path().join("slice_19.txt");
        let mut bytes = std::fs::read(&path).unwrap();
        let last_digit = bytes.iter().rposition(u8::is_ascii_digit).unwrap();
        bytes[last_digit] = if bytes[last_digit] == b'1' { b'2' } else { b'1' };
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn missing_slice_and_bad_version() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("slice_20.txt")).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::MissingFile(_))));

        save_model(&m, dir.path()).unwrap();
        let meta_path = dir.path().join(METADATA);
        let text = std::fs::read_to_string(&meta_path).unwrap();
        std::fs::write(
            &meta_path,
            text.replace("\"format_version\": 1", "\"format_version\": 9"),
        )
        .unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Version { found: 9, .. })));
    }

    proptest! {
        #[test]
        fn value_text_round_trips(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3)) {
            let vocab = Vocabulary::from_counts([("w".to_string(), 1)], 1).unwrap();
            let m = EmbeddingMatrix::from_vec(1, 3, values).unwrap();
            let text = format_embeddings(&vocab, &m);
            let (words, back) = parse_embeddings(&text, Path::new("p")).unwrap();
            prop_assert_eq!(words, vec!["w".to_string()]);
            prop_assert!(back.bit_eq(&m));
        }
    }
}
