//! Adapter for an out-of-process recognizer. The child reads one PNG path
//! per line on stdin and answers with one line of recognized text.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{CharMatch, OcrError, Recognizer};
use crate::raster::GrayImage;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// The engine reports no per-character confidence, so scores are 0.
pub struct ExternalRecognizer {
    session: Mutex<Session>,
    scratch: PathBuf,
}

impl ExternalRecognizer {
    /// Starts `program` with `args`; crops are written under the system temp dir.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, OcrError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| OcrError::External("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| OcrError::External("no stdout".into()))?;
        Ok(Self {
            session: Mutex::new(Session {
                child,
                stdin,
                stdout: BufReader::new(stdout),
            }),
            scratch: std::env::temp_dir(),
        })
    }
}

impl Recognizer for ExternalRecognizer {
    fn recognize(&self, img: &GrayImage) -> Result<Vec<CharMatch>, OcrError> {
        if img.is_empty() {
            return Err(OcrError::EmptyImage);
        }
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        let path = self
            .scratch
            .join(format!("plateguard-ocr-{}-{id}.png", std::process::id()));
        img.save_png(&path)?;
        let reply = {
            let mut s = self.session.lock().map_err(|_| OcrError::External("poisoned".into()))?;
            writeln!(s.stdin, "{}", path.display())?;
            s.stdin.flush()?;
            let mut line = String::new();
            let n = s.stdout.read_line(&mut line)?;
            if n == 0 {
                Err(OcrError::External("recognizer closed its output".into()))
            } else {
                Ok(line)
            }
        };
        let _ = std::fs::remove_file(&path);
        let text = reply?;
        let chars: Vec<CharMatch> = text
            .trim_end_matches(['\r', '\n'])
            .chars()
            .map(|ch| CharMatch { ch, score: 0.0 })
            .collect();
        if chars.is_empty() {
            return Err(OcrError::NoCharactersFound);
        }
        Ok(chars)
    }
}

impl Drop for ExternalRecognizer {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}
