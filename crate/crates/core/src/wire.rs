//! JSON Lines landmark stream: one [`LandmarkFrame`] per line.
//!
//! Each line carries exactly the keys `subject_id`, `frame_id`,
//! `face_count`, `width`, `height` and `landmarks` (68 `[x, y]` pairs).
//! A line that fails to parse is a hard error naming its 1-based number.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::geometry::LandmarkFrame;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

/// Lazily parses frames from a JSONL reader. Blank lines are skipped.
pub struct FrameReader<R> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<LandmarkFrame, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(source) => {
                    return Some(Err(WireError::Io {
                        line: self.line,
                        source,
                    }))
                }
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(serde_json::from_str(text).map_err(|source| WireError::Parse {
                line: self.line,
                source,
            }));
        }
    }
}

/// Reads every frame, failing on the first malformed line.
pub fn read_frames<R: BufRead>(reader: R) -> Result<Vec<LandmarkFrame>, WireError> {
    FrameReader::new(reader).collect()
}

pub fn write_frame<W: Write>(out: &mut W, frame: &LandmarkFrame) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, frame)?;
    out.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn frame(id: u64) -> LandmarkFrame {
        let lm = (0..68).map(|i| Point::new(i as f64, 0.5 * i as f64)).collect();
        LandmarkFrame::new("subj", id, 1, (640, 480), lm).unwrap()
    }

    #[test]
    fn writes_exact_keys() {
        let mut out = Vec::new();
        write_frame(&mut out, &frame(3)).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(
            r#"{"subject_id":"subj","frame_id":3,"face_count":1,"width":640,"height":480,"landmarks":[[0.0,0.0],[1.0,0.5],"#
        ));
        assert!(text.ends_with("]]}\n"));
    }

    #[test]
    fn reads_back_and_skips_blank_lines() {
        let mut out = Vec::new();
        write_frame(&mut out, &frame(0)).unwrap();
        out.extend_from_slice(b"\n  \n");
        write_frame(&mut out, &frame(1)).unwrap();
        let frames = read_frames(out.as_slice()).unwrap();
        assert_eq!(frames, vec![frame(0), frame(1)]);
    }

    #[test]
    fn bad_line_is_reported_by_number() {
        let mut out = Vec::new();
        write_frame(&mut out, &frame(0)).unwrap();
        out.extend_from_slice(b"{\"subject_id\": \"x\"}\n");
        match read_frames(out.as_slice()) {
            Err(WireError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_landmark_count_is_a_parse_error() {
        let line = r#"{"subject_id":"a","frame_id":0,"face_count":1,"width":1,"height":1,"landmarks":[[0,0]]}"#;
        let err = read_frames(line.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(err.to_string().contains("expected 68 landmarks"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut out = Vec::new();
        write_frame(&mut out, &frame(0)).unwrap();
        let text = String::from_utf8(out).unwrap().replacen('{', r#"{"extra":1,"#, 1);
        assert!(read_frames(text.as_bytes()).is_err());
    }
}
