//! Line-delimited JSON artifacts with an optional leading header record.
//!
//! Files written by this crate start with a single line of the form
//! `{"header": {...}}` carrying the format version, tool version, seed and
//! config digest. Readers skip it after checking the version.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::{FORMAT_VERSION, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_digest: String,
}

impl ArtifactHeader {
    pub fn new(kind: &str, seed: Option<u64>, config_digest: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config_digest: config_digest.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ArtifactHeader,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("missing header line (format_version required)")]
    MissingHeader,
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parsed JSONL content: the header (if present) and the records in order.
#[derive(Debug)]
pub struct JsonlDocument<T> {
    pub header: Option<ArtifactHeader>,
    pub records: Vec<T>,
}

pub fn read_jsonl<T, R>(reader: R, require_header: bool) -> Result<JsonlDocument<T>, JsonlError>
where
    T: DeserializeOwned,
    R: BufRead,
{
    let mut header = None;
    let mut records = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if first {
            first = false;
            if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                if h.header.format_version != FORMAT_VERSION {
                    return Err(JsonlError::Version(h.header.format_version));
                }
                header = Some(h.header);
                continue;
            }
        }
        let rec = serde_json::from_str(&line).map_err(|e| JsonlError::Record {
            line: lineno,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    if require_header && header.is_none() {
        return Err(JsonlError::MissingHeader);
    }
    Ok(JsonlDocument { header, records })
}

pub fn write_jsonl<T, W>(mut writer: W, header: &ArtifactHeader, records: &[T]) -> std::io::Result<()>
where
    T: Serialize,
    W: Write,
{
    let h = HeaderLine { header: header.clone() };
    serde_json::to_writer(&mut writer, &h)?;
    writer.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped_and_checked() {
        let mut buf = Vec::new();
        let h = ArtifactHeader::new("test", Some(3), "abc");
        write_jsonl(&mut buf, &h, &[1u32, 2, 3]).unwrap();
        let doc: JsonlDocument<u32> = read_jsonl(&buf[..], true).unwrap();
        assert_eq!(doc.header, Some(h));
        assert_eq!(doc.records, vec![1, 2, 3]);
    }

    #[test]
    fn missing_header_rejected_when_required() {
        let err = read_jsonl::<u32, _>("1\n2\n".as_bytes(), true).unwrap_err();
        assert!(matches!(err, JsonlError::MissingHeader));
    }

    #[test]
    fn bad_record_reports_line() {
        let text = "{\"header\":{\"format_version\":1,\"kind\":\"x\",\"tool_version\":\"0\",\"seed\":null,\"config_digest\":\"\"}}\n1\nnope\n";
        match read_jsonl::<u32, _>(text.as_bytes(), true) {
            Err(JsonlError::Record { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let text = "{\"header\":{\"format_version\":2,\"kind\":\"x\",\"tool_version\":\"0\",\"seed\":null,\"config_digest\":\"\"}}\n";
        assert!(matches!(
            read_jsonl::<u32, _>(text.as_bytes(), true),
            Err(JsonlError::Version(2))
        ));
    }
}
