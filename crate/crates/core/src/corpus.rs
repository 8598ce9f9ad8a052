//! Corpus model: test-assertion pairs (TAPs) grouped into train / validation /
//! test splits.
//!
//! Two on-disk layouts are supported. JSONL files carry raw source strings
//! that get lexed on load; parallel text files carry pre-tokenized lines that
//! are split on whitespace:
//!
//! * `<dir>/<split>.jsonl` — one object per line with `id`, `focal_test`,
//!   and `assertion` fields;
//! * `<dir>/<split>.focal.txt` + `<dir>/<split>.assertion.txt` — line `i` of
//!   the two files forms TAP `i`.
//!
//! Lines that parse but lack a usable assertion are skipped and counted in
//! [`LoadStats`]; structurally broken lines (bad JSON, lexer failures) abort
//! the load with the offending line number.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lexer::{self, TokenSeq};

/// One test-assertion pair: a focal test (test method plus method under
/// test) and the assertion that belongs in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tap {
    pub id: u64,
    pub focal_test: TokenSeq,
    pub assertion: TokenSeq,
}

/// On-disk corpus layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// JSONL with raw source strings (lexed on load).
    Jsonl,
    /// Parallel text files with whitespace-separated tokens.
    Text,
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "text" => Ok(DataFormat::Text),
            other => Err(format!("unknown format `{other}` (expected jsonl or text)")),
        }
    }
}

/// Categories of JUnit-style assertions, as used in per-type reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssertType {
    Equals,
    True,
    That,
    NotNull,
    False,
    Null,
    ArrayEquals,
    Same,
    Other,
}

impl AssertType {
    pub const ALL: [AssertType; 9] = [
        AssertType::Equals,
        AssertType::True,
        AssertType::That,
        AssertType::NotNull,
        AssertType::False,
        AssertType::Null,
        AssertType::ArrayEquals,
        AssertType::Same,
        AssertType::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AssertType::Equals => "Equals",
            AssertType::True => "True",
            AssertType::That => "That",
            AssertType::NotNull => "NotNull",
            AssertType::False => "False",
            AssertType::Null => "Null",
            AssertType::ArrayEquals => "ArrayEquals",
            AssertType::Same => "Same",
            AssertType::Other => "Other",
        }
    }
}

impl fmt::Display for AssertType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named corpus with its three splits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<Tap>,
    pub validation: Vec<Tap>,
    pub test: Vec<Tap>,
}

/// Load-time bookkeeping: how many records were skipped for missing or empty
/// assertions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub loaded: usize,
    pub rejected: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{focal} has {focal_lines} lines but {assertion} has {assertion_lines}")]
    LineCountMismatch {
        focal: PathBuf,
        assertion: PathBuf,
        focal_lines: usize,
        assertion_lines: usize,
    },
    #[error("duplicate TAP id {id} (splits must carry disjoint ids)")]
    DuplicateId { id: u64 },
    #[error("no split files found under {dir}")]
    NoSplits { dir: PathBuf },
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<u64>,
    focal_test: Option<String>,
    assertion: Option<String>,
}

#[derive(Serialize)]
struct JsonlRecordOut {
    id: u64,
    focal_test: String,
    assertion: String,
}

/// Loads one JSONL split. Records with missing fields or an empty assertion
/// are skipped and counted; unparseable JSON or unlexable source is an error
/// carrying the 1-based line number.
pub fn load_taps_jsonl(path: &Path) -> Result<(Vec<Tap>, LoadStats), CorpusError> {
    let text = read_file(path)?;
    let mut taps = Vec::new();
    let mut stats = LoadStats::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        let (Some(id), Some(focal_src), Some(assertion_src)) =
            (record.id, record.focal_test, record.assertion)
        else {
            stats.rejected += 1;
            continue;
        };
        let lex = |src: &str| {
            lexer::tokenize(src).map_err(|e| CorpusError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })
        };
        let focal_test = lex(&focal_src)?;
        let assertion = lex(&assertion_src)?;
        if assertion.is_empty() {
            stats.rejected += 1;
            continue;
        }
        stats.loaded += 1;
        taps.push(Tap {
            id,
            focal_test,
            assertion,
        });
    }
    Ok((taps, stats))
}

/// Loads one parallel-text split: line `i` of each file forms TAP `i`, with
/// ids assigned as `id_base + i`. Tokens are whitespace-separated. Pairs with
/// an empty assertion line are skipped and counted.
pub fn load_taps_text(
    focal_path: &Path,
    assertion_path: &Path,
    id_base: u64,
) -> Result<(Vec<Tap>, LoadStats), CorpusError> {
    let focal_text = read_file(focal_path)?;
    let assertion_text = read_file(assertion_path)?;
    let focal_lines: Vec<&str> = focal_text.lines().collect();
    let assertion_lines: Vec<&str> = assertion_text.lines().collect();
    if focal_lines.len() != assertion_lines.len() {
        return Err(CorpusError::LineCountMismatch {
            focal: focal_path.to_path_buf(),
            assertion: assertion_path.to_path_buf(),
            focal_lines: focal_lines.len(),
            assertion_lines: assertion_lines.len(),
        });
    }
    let mut taps = Vec::new();
    let mut stats = LoadStats::default();
    for (i, (focal, assertion)) in focal_lines.iter().zip(&assertion_lines).enumerate() {
        let assertion: TokenSeq = assertion.split_whitespace().map(String::from).collect();
        if assertion.is_empty() {
            stats.rejected += 1;
            continue;
        }
        stats.loaded += 1;
        taps.push(Tap {
            id: id_base + i as u64,
            focal_test: focal.split_whitespace().map(String::from).collect(),
            assertion,
        });
    }
    Ok((taps, stats))
}

const SPLITS: [&str; 3] = ["train", "validation", "test"];

impl Dataset {
    /// Loads `train`/`validation`/`test` splits from a directory. Missing
    /// split files yield empty splits; if none exist the load fails. For the
    /// text format, ids are assigned sequentially across splits in load
    /// order, so they are disjoint by construction.
    pub fn load_dir(dir: &Path, format: DataFormat) -> Result<(Dataset, LoadStats), CorpusError> {
        let mut splits: [Vec<Tap>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut stats = LoadStats::default();
        let mut found_any = false;
        let mut next_id = 0u64;
        for (slot, name) in splits.iter_mut().zip(SPLITS) {
            let (taps, s) = match format {
                DataFormat::Jsonl => {
                    let path = dir.join(format!("{name}.jsonl"));
                    if !path.exists() {
                        continue;
                    }
                    load_taps_jsonl(&path)?
                }
                DataFormat::Text => {
                    let focal = dir.join(format!("{name}.focal.txt"));
                    let assertion = dir.join(format!("{name}.assertion.txt"));
                    if !focal.exists() && !assertion.exists() {
                        continue;
                    }
                    let (taps, s) = load_taps_text(&focal, &assertion, next_id)?;
                    next_id += (s.loaded + s.rejected) as u64;
                    (taps, s)
                }
            };
            found_any = true;
            stats.loaded += s.loaded;
            stats.rejected += s.rejected;
            *slot = taps;
        }
        if !found_any {
            return Err(CorpusError::NoSplits {
                dir: dir.to_path_buf(),
            });
        }
        let [train, validation, test] = splits;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        let dataset = Dataset {
            name,
            train,
            validation,
            test,
        };
        dataset.validate()?;
        Ok((dataset, stats))
    }

    /// Writes all splits back out. JSONL records carry space-joined token
    /// streams, which the lexer re-splits into the same tokens; the text
    /// format round-trips tokens exactly.
    pub fn save_dir(&self, dir: &Path, format: DataFormat) -> Result<(), CorpusError> {
        let io_err = |path: &Path, source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (taps, name) in [(&self.train, "train"), (&self.validation, "validation"), (&self.test, "test")]
        {
            match format {
                DataFormat::Jsonl => {
                    let mut out = String::new();
                    for tap in taps {
                        let record = JsonlRecordOut {
                            id: tap.id,
                            focal_test: tap.focal_test.join(" "),
                            assertion: tap.assertion.join(" "),
                        };
                        out.push_str(&serde_json::to_string(&record).expect("serializable"));
                        out.push('\n');
                    }
                    let path = dir.join(format!("{name}.jsonl"));
                    fs::write(&path, out).map_err(|e| io_err(&path, e))?;
                }
                DataFormat::Text => {
                    let focal: String = taps
                        .iter()
                        .map(|t| t.focal_test.join(" ") + "\n")
                        .collect();
                    let assertion: String =
                        taps.iter().map(|t| t.assertion.join(" ") + "\n").collect();
                    let fp = dir.join(format!("{name}.focal.txt"));
                    fs::write(&fp, focal).map_err(|e| io_err(&fp, e))?;
                    let ap = dir.join(format!("{name}.assertion.txt"));
                    fs::write(&ap, assertion).map_err(|e| io_err(&ap, e))?;
                }
            }
        }
        Ok(())
    }

    /// Checks that ids are unique across the whole dataset (and therefore
    /// disjoint across splits).
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for tap in self.all() {
            if !seen.insert(tap.id) {
                return Err(CorpusError::DuplicateId { id: tap.id });
            }
        }
        Ok(())
    }

    /// Iterates every TAP across all splits, train first.
    pub fn all(&self) -> impl Iterator<Item = &Tap> {
        self.train
            .iter()
            .chain(self.validation.iter())
            .chain(self.test.iter())
    }

    pub fn split(&self, name: &str) -> Option<&[Tap]> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Classifies an assertion by the first token that begins with `assert`
/// (case-sensitive); the suffix selects the category, anything else is
/// `Other`. Qualified calls such as `Assert.assertEquals(..)` classify by the
/// `assertEquals` token.
pub fn classify_assertion(tokens: &[String]) -> AssertType {
    for token in tokens {
        if let Some(suffix) = token.strip_prefix("assert") {
            return match suffix {
                "Equals" => AssertType::Equals,
                "True" => AssertType::True,
                "That" => AssertType::That,
                "NotNull" => AssertType::NotNull,
                "False" => AssertType::False,
                "Null" => AssertType::Null,
                "ArrayEquals" => AssertType::ArrayEquals,
                "Same" => AssertType::Same,
                _ => AssertType::Other,
            };
        }
    }
    AssertType::Other
}

/// Per-split summary: TAP count, assertion length histogram, and assertion
/// type counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub count: usize,
    pub assertion_lengths: BTreeMap<usize, usize>,
    pub assert_types: BTreeMap<String, usize>,
}

pub fn split_stats(taps: &[Tap]) -> SplitStats {
    let mut assertion_lengths = BTreeMap::new();
    let mut assert_types = BTreeMap::new();
    for tap in taps {
        *assertion_lengths.entry(tap.assertion.len()).or_insert(0) += 1;
        *assert_types
            .entry(classify_assertion(&tap.assertion).name().to_string())
            .or_insert(0) += 1;
    }
    SplitStats {
        count: taps.len(),
        assertion_lengths,
        assert_types,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn classify_covers_the_taxonomy() {
        let cases = [
            ("assertEquals ( a , b )", AssertType::Equals),
            ("assertTrue ( x )", AssertType::True),
            ("assertThat ( x , is ( y ) )", AssertType::That),
            ("assertNotNull ( x )", AssertType::NotNull),
            ("assertFalse ( x )", AssertType::False),
            ("assertNull ( x )", AssertType::Null),
            ("assertArrayEquals ( a , b )", AssertType::ArrayEquals),
            ("assertSame ( a , b )", AssertType::Same),
            ("assertNotSame ( a , b )", AssertType::Other),
            ("Assert . assertEquals ( a , b )", AssertType::Equals),
            ("verify ( mock )", AssertType::Other),
            ("assert ( x )", AssertType::Other),
        ];
        for (src, expected) in cases {
            assert_eq!(classify_assertion(&seq(src)), expected, "{src}");
        }
    }

    #[test]
    fn first_assert_token_wins() {
        // The leading token decides even when a later one would match a
        // known category.
        let toks = seq("assertStuff ( assertEquals )");
        assert_eq!(classify_assertion(&toks), AssertType::Other);
    }

    #[test]
    fn jsonl_load_lexes_and_counts_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":0,"focal_test":"int v=f();","assertion":"assertEquals(1,v)"}"#,
                "\n",
                r#"{"id":1,"focal_test":"g();"}"#,
                "\n",
                r#"{"id":2,"focal_test":"h();","assertion":""}"#,
                "\n",
            ),
        )
        .unwrap();
        let (taps, stats) = load_taps_jsonl(&path).unwrap();
        assert_eq!(stats, LoadStats { loaded: 1, rejected: 2 });
        assert_eq!(taps.len(), 1);
        assert_eq!(taps[0].focal_test, seq("int v = f ( ) ;"));
        assert_eq!(taps[0].assertion, seq("assertEquals ( 1 , v )"));
    }

    #[test]
    fn jsonl_malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        std::fs::write(&path, "{\"id\":0,\"focal_test\":\"a\",\"assertion\":\"b\"}\nnot json\n")
            .unwrap();
        let err = load_taps_jsonl(&path).unwrap_err();
        match err {
            CorpusError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn text_round_trip_preserves_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = Dataset {
            name: "toy".into(),
            train: vec![Tap {
                id: 0,
                focal_test: seq("int v = f ( ) ;"),
                assertion: seq("assertEquals ( 1 , v )"),
            }],
            validation: vec![],
            test: vec![Tap {
                id: 1,
                focal_test: seq("g ( ) ;"),
                assertion: seq("assertTrue ( ok )"),
            }],
        };
        dataset.save_dir(dir.path(), DataFormat::Text).unwrap();
        let (reloaded, stats) = Dataset::load_dir(dir.path(), DataFormat::Text).unwrap();
        assert_eq!(stats.loaded, 2);
        let orig: Vec<_> = dataset.all().map(|t| (&t.focal_test, &t.assertion)).collect();
        let back: Vec<_> = reloaded.all().map(|t| (&t.focal_test, &t.assertion)).collect();
        assert_eq!(orig, back);
    }

    #[test]
    fn jsonl_round_trip_preserves_tokens() {
        let dir = tempfile::tempdir().unwrap();
        // Tokens must come from the lexer: a string literal with an embedded
        // space is one token, which survives the save/lex round trip.
        let dataset = Dataset {
            name: "toy".into(),
            train: vec![Tap {
                id: 7,
                focal_test: lexer::tokenize("String s = x.name();").unwrap(),
                assertion: lexer::tokenize("assertEquals(\"a b\", s)").unwrap(),
            }],
            validation: vec![],
            test: vec![],
        };
        dataset.save_dir(dir.path(), DataFormat::Jsonl).unwrap();
        let (reloaded, _) = Dataset::load_dir(dir.path(), DataFormat::Jsonl).unwrap();
        assert_eq!(reloaded.train[0].focal_test, dataset.train[0].focal_test);
        assert_eq!(reloaded.train[0].assertion, dataset.train[0].assertion);
        assert_eq!(reloaded.train[0].id, 7);
    }

    #[test]
    fn duplicate_ids_across_splits_are_rejected() {
        let tap = Tap {
            id: 3,
            focal_test: seq("a"),
            assertion: seq("assertTrue ( a )"),
        };
        let dataset = Dataset {
            name: "dup".into(),
            train: vec![tap.clone()],
            validation: vec![],
            test: vec![tap],
        };
        assert!(matches!(
            dataset.validate(),
            Err(CorpusError::DuplicateId { id: 3 })
        ));
    }

    #[test]
    fn split_stats_counts_types_and_lengths() {
        let taps = vec![
            Tap {
                id: 0,
                focal_test: seq("a"),
                assertion: seq("assertTrue ( x )"),
            },
            Tap {
                id: 1,
                focal_test: seq("b"),
                assertion: seq("assertEquals ( 1 , v )"),
            },
            Tap {
                id: 2,
                focal_test: seq("c"),
                assertion: seq("assertTrue ( y )"),
            },
        ];
        let stats = split_stats(&taps);
        assert_eq!(stats.count, 3);
        assert_eq!(stats.assert_types["True"], 2);
        assert_eq!(stats.assert_types["Equals"], 1);
        assert_eq!(stats.assertion_lengths[&4], 2);
        assert_eq!(stats.assertion_lengths[&6], 1);
    }
}
