//! Comma-separated files: RFC 4180 quoting, fields trimmed, blank lines
//! ignored, ragged rows allowed (callers check field counts).

use std::cell::RefCell;
use std::collections::VecDeque;
use std::io::Read;
use std::path::Path;
use std::rc::Rc;

use crate::{Error, Result};

pub(crate) struct Record {
    /// 1-based line the record starts on.
    pub line: usize,
    pub fields: Vec<String>,
}

impl Record {
    pub fn fields(&self) -> Vec<&str> {
        self.fields.iter().map(String::as_str).collect()
    }

    /// The record re-joined, for messages.
    pub fn text(&self) -> String {
        self.fields.join(",")
    }

    pub fn first_is(&self, header: &str) -> bool {
        self.line == 1 && self.fields.first().is_some_and(|f| f == header)
    }
}

/// Records the byte offset of every newline read through it, so record
/// positions can be turned into physical line numbers (the parser itself
/// does not count blank lines).
struct NewlineTracker<R> {
    inner: R,
    offset: u64,
    newlines: Rc<RefCell<VecDeque<u64>>>,
}

impl<R: Read> Read for NewlineTracker<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        let mut nl = self.newlines.borrow_mut();
        for (i, _) in buf[..n].iter().enumerate().filter(|(_, &b)| b == b'\n') {
            nl.push_back(self.offset + i as u64);
        }
        self.offset += n as u64;
        Ok(n)
    }
}

/// Streams the records of `source`, calling `f` for each. With `comments`,
/// lines starting with `#` are skipped.
pub(crate) fn for_each<R: Read>(
    source: R,
    path: &Path,
    comments: bool,
    mut f: impl FnMut(Record) -> Result<()>,
) -> Result<()> {
    let newlines = Rc::new(RefCell::new(VecDeque::new()));
    let mut lines_before = 0;
    let mut line_at = |byte: u64| {
        let mut nl = newlines.borrow_mut();
        while nl.front().is_some_and(|&o| o < byte) {
            nl.pop_front();
            lines_before += 1;
        }
        lines_before + 1
    };
    let tracked = NewlineTracker {
        inner: source,
        offset: 0,
        newlines: Rc::clone(&newlines),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(comments.then_some(b'#'))
        .from_reader(tracked);
    let mut row = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut row).map_err(|e| {
            let line = e.position().map_or(0, |p| line_at(p.byte() + 1));
            match e.into_kind() {
                csv::ErrorKind::Io(source) => Error::io(path, source),
                other => Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("{other:?}"),
                },
            }
        })?;
        if !more {
            return Ok(());
        }
        // The end position sits just past the record's terminator.
        let last_line = line_at(reader.position().byte().saturating_sub(1));
        let embedded: usize = row.iter().map(|f| f.matches('\n').count()).sum();
        let fields: Vec<String> = row.iter().map(|f| f.trim().to_string()).collect();
        if fields.iter().all(String::is_empty) {
            continue;
        }
        f(Record {
            line: last_line - embedded,
            fields,
        })?;
    }
}

pub(crate) fn for_each_in_file(path: &Path, comments: bool, f: impl FnMut(Record) -> Result<()>) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for_each(file, path, comments, f)
}

/// Builds CSV text, quoting only fields that need it.
pub(crate) struct CsvText(csv::Writer<Vec<u8>>);

impl CsvText {
    pub fn new(header: &[&str]) -> Self {
        let mut w = Self::headless();
        w.row(header);
        w
    }

    pub fn headless() -> Self {
        CsvText(csv::WriterBuilder::new().flexible(true).from_writer(Vec::new()))
    }

    pub fn row<I: IntoIterator<Item = T>, T: AsRef<[u8]>>(&mut self, fields: I) {
        self.0.write_record(fields).expect("writing to memory");
    }

    pub fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, comments: bool) -> Vec<(usize, Vec<String>)> {
        let mut out = Vec::new();
        for_each(text.as_bytes(), Path::new("t"), comments, |r| {
            out.push((r.line, r.fields));
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn quoting_trimming_and_line_numbers() {
        let rows = parse("a, b ,c\n\n\"x,y\",\"say \"\"hi\"\"\"\n# note\nlast\n", true);
        for (t, want) in [("\n\nx\n", 3), ("a\n\n\n\nx\n", 5), ("a\n\r\n\nx\n", 4)] {
            assert_eq!(parse(t, false).last().unwrap().0, want, "{t:?}");
        }
        let lines: Vec<usize> = parse("a\n\"x\ny\",z\n\nb", false).iter().map(|r| r.0).collect();
        assert_eq!(lines, [1, 2, 5]);
        let mut long = "\n".repeat(20_000);
        long.push_str("far\n");
        assert_eq!(parse(&long, false), vec![(20_001, vec!["far".to_string()])]);
        assert_eq!(
            rows,
            vec![
                (1, vec!["a".into(), "b".into(), "c".into()]),
                (3, vec!["x,y".into(), "say \"hi\"".into()]),
                (5, vec!["last".into()]),
            ]
        );
        assert_eq!(parse("# kept\n", false)[0].1, vec!["# kept".to_string()]);
    }

    #[test]
    fn writer_round_trips() {
        let mut w = CsvText::new(&["id", "note"]);
        w.row(["plain", "with,comma"]);
        w.row(["q\"uote", ""]);
        let text = w.finish();
        assert!(text.starts_with("id,note\nplain,\"with,comma\"\n"));
        let rows = parse(&text, false);
        assert_eq!(rows[1].1, vec!["plain".to_string(), "with,comma".to_string()]);
        assert_eq!(rows[2].1, vec!["q\"uote".to_string(), String::new()]);
    }
}
