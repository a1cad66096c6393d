//! JSONL corpora of `(id, code, summary)` records.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: u64,
    pub code: String,
    pub summary: String,
}

pub fn parse_jsonl(text: &str) -> Result<Vec<CorpusRecord>> {
    read_lines(text.as_bytes())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::Corpus(format!("cannot open {}: {e}", path.display())))?;
    read_lines(BufReader::new(file))
}

fn read_lines(reader: impl BufRead) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| Error::Corpus(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(records: &[CorpusRecord], out: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Collects every `.c` file under `dir` that has a sibling `.txt` summary,
/// in path order, numbering records from 0. Returns the records and the
/// `.c` files that lacked a summary.
pub fn import_dir(dir: &Path) -> Result<(Vec<CorpusRecord>, Vec<String>)> {
    if !dir.is_dir() {
        return Err(Error::Corpus(format!("{} is not a directory", dir.display())));
    }
    let mut records = Vec::new();
    let mut missing = Vec::new();
    let walker = WalkDir::new(dir).sort_by_file_name();
    for entry in walker {
        let entry = entry.map_err(|e| Error::Corpus(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "c") {
            continue;
        }
        let sidecar = path.with_extension("txt");
        if !sidecar.is_file() {
            missing.push(path.display().to_string());
            continue;
        }
        records.push(CorpusRecord {
            id: records.len() as u64,
            code: fs::read_to_string(path)?,
            summary: fs::read_to_string(&sidecar)?.trim().to_string(),
        });
    }
    Ok((records, missing))
}

const VERBS: [&str; 8] = ["get", "set", "count", "reset", "check", "free", "sum", "print"];
const NOUNS: [&str; 8] = ["buffer", "node", "timer", "packet", "queue", "device", "page", "entry"];

fn template(verb: &str, noun: &str) -> (String, String) {
    let code = match verb {
        "get" => format!("int get_{noun}(struct ctx *p){{ return p->{noun}; }}"),
        "set" => format!("void set_{noun}(struct ctx *p, int v){{ p->{noun} = v; }}"),
        "count" => format!(
            "int count_{noun}s(int *a, int n){{ int c = 0; int i; for (i = 0; i < n; i++) {{ if (a[i] == {noun}_id) c++; }} return c; }}"
        ),
        "reset" => format!("void reset_{noun}(struct ctx *p){{ p->{noun} = 0; p->flags = 0; }}"),
        "check" => format!("int check_{noun}(int x){{ if (x < 0) return 0; if (x > max_{noun}) return 0; return 1; }}"),
        "free" => format!("void free_{noun}(struct {noun} *p){{ if (p == NULL) return; release(p->data); free(p); }}"),
        "sum" => format!(
            "int sum_{noun}(int *a, int n){{ int s = 0; int i; for (i = 0; i < n; i++) s += a[i]; return s; }}"
        ),
        _ => format!("void print_{noun}(struct {noun} *p){{ printf(\"%d\\n\", p->id); }}"),
    };
    let summary = match verb {
        "count" => format!("count the {noun}s"),
        "check" => format!("check whether the {noun} is valid"),
        "sum" => format!("sum the {noun} values"),
        _ => format!("{verb} the {noun}"),
    };
    (code, summary)
}

/// Deterministic toy corpus of `n` template functions whose summaries
/// follow from their names. At most 64 distinct pairs exist; larger `n`
/// repeats them under new ids.
pub fn synthetic(n: usize, seed: u64) -> Vec<CorpusRecord> {
    use rand::seq::SliceRandom;
    let mut pairs: Vec<(usize, usize)> = (0..VERBS.len()).flat_map(|v| (0..NOUNS.len()).map(move |o| (v, o))).collect();
    pairs.shuffle(&mut crate::rng::seeded(seed));
    (0..n)
        .map(|i| {
            let (v, o) = pairs[i % pairs.len()];
            let (code, summary) = template(VERBS[v], NOUNS[o]);
            CorpusRecord { id: i as u64, code, summary }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            CorpusRecord { id: 3, code: "int f(){ return 0; }".into(), summary: "returns zero".into() },
            CorpusRecord { id: 4, code: "void g(){}\n".into(), summary: "does \"nothing\"".into() },
        ];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        assert_eq!(parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(), recs);
    }

    #[test]
    fn bad_line_reports_line_number() {
        let err = parse_jsonl("{\"id\":1,\"code\":\"\",\"summary\":\"\"}\n{oops}\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn synthetic_functions_parse() {
        let recs = synthetic(64, 1);
        for r in &recs {
            crate::frontend::parse_function(&r.code).unwrap_or_else(|e| panic!("{}: {e}", r.code));
        }
        assert_eq!(synthetic(64, 1), recs);
        let distinct: std::collections::BTreeSet<_> = recs.iter().map(|r| &r.summary).collect();
        assert_eq!(distinct.len(), 64);
    }

    #[test]
    fn import_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("b.c"), "int b(){ return 1; }").unwrap();
        fs::write(dir.path().join("b.txt"), "returns one\n").unwrap();
        fs::write(dir.path().join("sub/a.c"), "void a(){}").unwrap();
        fs::write(dir.path().join("sub/a.txt"), "does nothing").unwrap();
        fs::write(dir.path().join("lonely.c"), "void x(){}").unwrap();
        let (recs, missing) = import_dir(dir.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].id, recs[0].summary.as_str()), (0, "returns one"));
        assert_eq!(recs[1].summary, "does nothing");
        assert_eq!(missing.len(), 1);
    }
}
