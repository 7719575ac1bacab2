//! Machine translation plumbing: language-group taxonomy, a pluggable
//! translation client with an on-disk cache, label projection and
//! training-set assembly for the translate-train groups.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Source};
use crate::error::{Error, Result};

pub const ROMANCE: &[&str] = &["es", "fr", "it"];
pub const WEST_GERMANIC: &[&str] = &["en", "de", "nl"];
pub const NORTH_GERMANIC: &[&str] = &["da", "sv", "nb"];
pub const SLAVIC: &[&str] = &["pl", "sk", "ru"];
pub const SEMITIC: &[&str] = &["ar", "he"];
pub const CJ: &[&str] = &["zh", "zt", "ja"];

/// The five non-English target languages.
pub const TARGET_LANGUAGES: &[&str] = &["de", "nl", "es", "fr", "it"];

/// Training-set language group kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "TL")]
    Tl,
    #[serde(rename = "RL")]
    Rl,
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "6L")]
    SixL,
    #[serde(rename = "9L")]
    NineL,
    #[serde(rename = "17L")]
    SeventeenL,
}

impl GroupKind {
    pub fn parse(s: &str) -> Option<GroupKind> {
        match s {
            "EN" => Some(GroupKind::En),
            "TL" => Some(GroupKind::Tl),
            "RL" => Some(GroupKind::Rl),
            "DL" => Some(GroupKind::Dl),
            "6L" => Some(GroupKind::SixL),
            "9L" => Some(GroupKind::NineL),
            "17L" => Some(GroupKind::SeventeenL),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupKind::En => "EN",
            GroupKind::Tl => "TL",
            GroupKind::Rl => "RL",
            GroupKind::Dl => "DL",
            GroupKind::SixL => "6L",
            GroupKind::NineL => "9L",
            GroupKind::SeventeenL => "17L",
        }
    }

    /// Whether the kind depends on a concrete target language.
    pub fn needs_target(&self) -> bool {
        matches!(self, GroupKind::Tl | GroupKind::Rl | GroupKind::Dl)
    }
}

impl std::fmt::Display for GroupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A language group for training-set assembly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguageGroup {
    pub kind: GroupKind,
    /// Target language; required for TL/RL/DL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl LanguageGroup {
    pub fn new(kind: GroupKind, target: Option<&str>) -> Self {
        LanguageGroup {
            kind,
            target: target.map(|t| t.to_string()),
        }
    }
}

fn six_l() -> Vec<&'static str> {
    vec!["en", "de", "nl", "es", "fr", "it"]
}

/// Resolves a language group into its ordered set of language codes.
pub fn resolve_group(group: &LanguageGroup) -> Result<Vec<String>> {
    let to_owned = |v: Vec<&str>| v.into_iter().map(String::from).collect();
    let target = || -> Result<&str> {
        let t = group
            .target
            .as_deref()
            .ok_or_else(|| Error::InvalidGroupTarget("<none>".into(), group.kind.to_string()))?;
        if !TARGET_LANGUAGES.contains(&t) {
            return Err(Error::InvalidGroupTarget(t.into(), group.kind.to_string()));
        }
        Ok(t)
    };
    match group.kind {
        GroupKind::En => Ok(vec!["en".into()]),
        GroupKind::Tl => Ok(vec![target()?.into()]),
        GroupKind::Rl => {
            let t = target()?;
            if ROMANCE.contains(&t) {
                Ok(to_owned(ROMANCE.to_vec()))
            } else {
                Ok(to_owned(WEST_GERMANIC.to_vec()))
            }
        }
        GroupKind::Dl => {
            let t = target()?;
            if ROMANCE.contains(&t) {
                Ok(to_owned(WEST_GERMANIC.to_vec()))
            } else {
                Ok(to_owned(ROMANCE.to_vec()))
            }
        }
        GroupKind::SixL => Ok(to_owned(six_l())),
        GroupKind::NineL => {
            let mut v = six_l();
            v.extend_from_slice(NORTH_GERMANIC);
            Ok(to_owned(v))
        }
        GroupKind::SeventeenL => {
            let mut v = six_l();
            v.extend_from_slice(NORTH_GERMANIC);
            v.extend_from_slice(SLAVIC);
            v.extend_from_slice(SEMITIC);
            v.extend_from_slice(CJ);
            Ok(to_owned(v))
        }
    }
}

/// Order-preserving batch translation.
pub trait TranslationClient {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>>;

    /// Stable identifier, part of the cache key.
    fn client_id(&self) -> &str;
}

/// Deterministic, invertible stand-in for a real MT engine.
///
/// Out of English every whitespace token is reversed and tagged with
/// "·<tgt>"; translating back strips the tag and reverses again. The
/// reversal destroys the character n-grams an English-trained baseline
/// relies on, which gives the harness a measurable zero-shot gap.
#[derive(Debug, Default)]
pub struct MockTranslator {
    texts_translated: AtomicUsize,
}

impl MockTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of individual texts translated so far (cache hits excluded).
    pub fn texts_translated(&self) -> usize {
        self.texts_translated.load(Ordering::Relaxed)
    }

    fn encode_token(token: &str, tgt: &str) -> String {
        let reversed: String = token.chars().rev().collect();
        format!("{reversed}\u{00b7}{tgt}")
    }

    fn decode_token(token: &str, src: &str) -> String {
        let suffix = format!("\u{00b7}{src}");
        let stripped = token.strip_suffix(suffix.as_str()).unwrap_or(token);
        stripped.chars().rev().collect()
    }

    fn transform(text: &str, src: &str, tgt: &str) -> String {
        let tokens: Vec<String> = text
            .split(' ')
            .map(|tok| {
                if tok.is_empty() {
                    return String::new();
                }
                match (src, tgt) {
                    ("en", _) => Self::encode_token(tok, tgt),
                    (_, "en") => Self::decode_token(tok, src),
                    _ => Self::encode_token(&Self::decode_token(tok, src), tgt),
                }
            })
            .collect();
        tokens.join(" ")
    }
}

impl TranslationClient for MockTranslator {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        self.texts_translated.fetch_add(texts.len(), Ordering::Relaxed);
        Ok(texts
            .iter()
            .map(|t| Self::transform(t, src, tgt))
            .collect())
    }

    fn client_id(&self) -> &str {
        "mock"
    }
}

/// HTTP translation client: POST {endpoint}/translate with
/// {"src", "tgt", "texts"} -> {"translations"}.
pub struct HttpTranslationClient {
    endpoint: String,
    client: reqwest::blocking::Client,
    max_attempts: u32,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    src: &'a str,
    tgt: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<String>,
}

impl HttpTranslationClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpTranslationClient {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
            max_attempts: 3,
        }
    }
}

impl TranslationClient for HttpTranslationClient {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        let url = format!("{}/translate", self.endpoint.trim_end_matches('/'));
        let body = TranslateRequest { src, tgt, texts };
        let mut last_err = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt));
            }
            match self.client.post(&url).json(&body).send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: TranslateResponse = resp.json().map_err(|e| Error::Remote {
                        endpoint: self.endpoint.clone(),
                        attempts: attempt + 1,
                        message: format!("bad response body: {e}"),
                    })?;
                    if parsed.translations.len() != texts.len() {
                        return Err(Error::Remote {
                            endpoint: self.endpoint.clone(),
                            attempts: attempt + 1,
                            message: format!(
                                "expected {} translations, got {}",
                                texts.len(),
                                parsed.translations.len()
                            ),
                        });
                    }
                    return Ok(parsed.translations);
                }
                Ok(resp) => last_err = format!("status {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Remote {
            endpoint: self.endpoint.clone(),
            attempts: self.max_attempts,
            message: last_err,
        })
    }

    fn client_id(&self) -> &str {
        &self.endpoint
    }
}

/// Append-only on-disk translation cache keyed by (text, src, tgt, client).
///
/// File format: one entry per line, tab-separated:
/// key-hash, src, tgt, base64(translation).
#[derive(Debug)]
pub struct TranslationCache {
    path: PathBuf,
    entries: HashMap<String, String>,
}

impl TranslationCache {
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                if line.is_empty() {
                    continue;
                }
                let parts: Vec<&str> = line.split('\t').collect();
                if parts.len() != 4 {
                    return Err(Error::CorruptCache {
                        path: path.display().to_string(),
                        line: i + 1,
                        message: format!("expected 4 tab-separated fields, got {}", parts.len()),
                    });
                }
                let decoded = base64::engine::general_purpose::STANDARD
                    .decode(parts[3])
                    .map_err(|e| Error::CorruptCache {
                        path: path.display().to_string(),
                        line: i + 1,
                        message: format!("bad base64: {e}"),
                    })?;
                let text = String::from_utf8(decoded).map_err(|e| Error::CorruptCache {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("not utf-8: {e}"),
                })?;
                entries.insert(parts[0].to_string(), text);
            }
        }
        Ok(TranslationCache {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn key(text: &str, src: &str, tgt: &str, client_id: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hasher.update([0u8]);
        hasher.update(src.as_bytes());
        hasher.update([0u8]);
        hasher.update(tgt.as_bytes());
        hasher.update([0u8]);
        hasher.update(client_id.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<&String> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: String, src: &str, tgt: &str, translation: &str) -> Result<()> {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::Io {
                path: self.path.display().to_string(),
                source: e,
            })?;
        let encoded = base64::engine::general_purpose::STANDARD.encode(translation.as_bytes());
        writeln!(file, "{key}\t{src}\t{tgt}\t{encoded}").map_err(|e| Error::Io {
            path: self.path.display().to_string(),
            source: e,
        })?;
        self.entries.insert(key, translation.to_string());
        Ok(())
    }
}

const TRANSLATE_BATCH: usize = 64;
const CLIENT_ATTEMPTS: u32 = 3;

fn translate_texts(
    texts: &[String],
    src: &str,
    tgt: &str,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
    first_record_id: &str,
) -> Result<Vec<String>> {
    let keys: Vec<String> = texts
        .iter()
        .map(|t| TranslationCache::key(t, src, tgt, client.client_id()))
        .collect();
    let mut out: Vec<Option<String>> = keys.iter().map(|k| cache.get(k).cloned()).collect();

    let miss_idx: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
    if !miss_idx.is_empty() {
        for chunk in miss_idx.chunks(TRANSLATE_BATCH) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let mut translated = None;
            let mut last_err = String::new();
            for attempt in 0..CLIENT_ATTEMPTS {
                if attempt > 0 {
                    std::thread::sleep(Duration::from_millis(50 << attempt));
                }
                match client.translate(&batch, src, tgt) {
                    Ok(t) if t.len() == batch.len() => {
                        translated = Some(t);
                        break;
                    }
                    Ok(t) => {
                        last_err = format!("batch length mismatch: sent {}, got {}", batch.len(), t.len())
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            let translated = translated.ok_or_else(|| Error::TranslationFailed {
                record_id: first_record_id.to_string(),
                message: last_err,
            })?;
            for (&i, t) in chunk.iter().zip(translated.iter()) {
                cache.insert(keys[i].clone(), src, tgt, t)?;
                out[i] = Some(t.clone());
            }
        }
    }
    Ok(out.into_iter().map(|o| o.unwrap()).collect())
}

fn single_source_lang(ds: &Dataset) -> Result<Option<String>> {
    let mut lang: Option<&str> = None;
    for r in &ds.records {
        match lang {
            None => lang = Some(&r.lang),
            Some(l) if l == r.lang => {}
            Some(l) => {
                return Err(Error::Config(format!(
                    "dataset `{}` mixes source languages `{l}` and `{}`",
                    ds.name, r.lang
                )))
            }
        }
    }
    Ok(lang.map(String::from))
}

/// Translates every record into `tgt`, projecting all labels verbatim.
/// Only text, lang and source change on the output records.
pub fn translate_records(
    ds: &Dataset,
    tgt: &str,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
) -> Result<Dataset> {
    let mut out = Dataset::new(format!("{}-{}", ds.name, tgt));
    let Some(src) = single_source_lang(ds)? else {
        return Ok(out);
    };
    let texts: Vec<String> = ds.records.iter().map(|r| r.text.clone()).collect();
    let translated = translate_texts(&texts, &src, tgt, client, cache, &ds.records[0].id)?;
    for (r, text) in ds.records.iter().zip(translated) {
        let mut nr = r.clone();
        nr.text = text;
        nr.lang = tgt.to_string();
        nr.source = Source::MachineTranslated;
        out.records.push(nr);
    }
    Ok(out)
}

/// One original sentence paired with its round-trip translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackTranslationPair {
    pub id: String,
    pub original: String,
    pub round_trip: String,
}

/// Translates src -> pivot -> src and pairs each record with its
/// round-trip text, for BLEU assessment.
pub fn back_translate(
    ds: &Dataset,
    pivot: &str,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
) -> Result<Vec<BackTranslationPair>> {
    let Some(src) = single_source_lang(ds)? else {
        return Ok(Vec::new());
    };
    let texts: Vec<String> = ds.records.iter().map(|r| r.text.clone()).collect();
    let forward = translate_texts(&texts, &src, pivot, client, cache, &ds.records[0].id)?;
    let back = translate_texts(&forward, pivot, &src, client, cache, &ds.records[0].id)?;
    Ok(ds
        .records
        .iter()
        .zip(back)
        .map(|(r, round_trip)| BackTranslationPair {
            id: r.id.clone(),
            original: r.text.clone(),
            round_trip,
        })
        .collect())
}

/// Concatenates the per-language training sets in resolved-group order.
pub fn assemble_group(
    per_lang: &BTreeMap<String, Dataset>,
    group: &LanguageGroup,
) -> Result<Dataset> {
    let langs = resolve_group(group)?;
    let name = match &group.target {
        Some(t) => format!("{}-{}", group.kind, t),
        None => group.kind.to_string(),
    };
    let mut out = Dataset::new(name);
    for lang in &langs {
        let ds = per_lang
            .get(lang)
            .ok_or_else(|| Error::MissingLanguage(lang.clone()))?;
        out.records.extend(ds.records.iter().cloned());
    }
    Ok(out)
}
