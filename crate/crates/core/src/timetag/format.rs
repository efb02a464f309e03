//! Tag file formats.
//!
//! Binary (QTAG): the 4 bytes `QTAG`, a version byte (1), a party byte, then
//! 9-byte little-endian records of `u64` timestamp (ps) followed by a `u8`
//! channel id.
//!
//! CSV: header `timestamp_ps,channel`, one event per line.

use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};

use super::{Party, TagEvent};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QTAG";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 6;
pub const RECORD_LEN: usize = 9;
pub const CSV_HEADER: &str = "timestamp_ps,channel";

pub fn write_qtag_header<W: Write>(w: &mut W, party: Party) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, party as u8])
}

pub fn write_qtag_record<W: Write>(w: &mut W, event: TagEvent) -> io::Result<()> {
    let mut rec = [0u8; RECORD_LEN];
    rec[..8].copy_from_slice(&event.timestamp_ps.to_le_bytes());
    rec[8] = event.channel;
    w.write_all(&rec)
}

pub fn write_qtag<W: Write>(w: &mut W, party: Party, events: &[TagEvent]) -> io::Result<()> {
    write_qtag_header(w, party)?;
    for &e in events {
        write_qtag_record(w, e)?;
    }
    Ok(())
}

/// Streaming reader over a QTAG file. Channel ids are validated; ordering is
/// left to the consumer.
pub struct QtagReader<R> {
    inner: R,
    party: Party,
    offset: u64,
    failed: bool,
}

impl<R: Read> QtagReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        inner.read_exact(&mut header).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Format("file shorter than QTAG header".into()),
            _ => Error::Io(e),
        })?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("missing QTAG magic".into()));
        }
        if header[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", header[4])));
        }
        let party = Party::from_id(header[5])
            .ok_or_else(|| Error::Format(format!("unknown party id {}", header[5])))?;
        Ok(Self {
            inner,
            party,
            offset: 0,
            failed: false,
        })
    }

    pub fn party(&self) -> Party {
        self.party
    }
}

impl<R: Read> Iterator for QtagReader<R> {
    type Item = Result<TagEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut rec = [0u8; RECORD_LEN];
        let mut filled = 0;
        while filled < RECORD_LEN {
            match self.inner.read(&mut rec[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Io(e)));
                }
            }
        }
        if filled == 0 {
            return None;
        }
        if filled < RECORD_LEN {
            self.failed = true;
            return Some(Err(Error::Format(format!(
                "truncated record {} ({filled} of {RECORD_LEN} bytes)",
                self.offset
            ))));
        }
        let index = self.offset;
        self.offset += 1;
        let timestamp_ps = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
        let channel = rec[8];
        if channel > 3 {
            self.failed = true;
            return Some(Err(Error::Format(format!(
                "record {index}: channel {channel} out of range"
            ))));
        }
        Some(Ok(TagEvent {
            timestamp_ps,
            channel,
        }))
    }
}

pub fn write_csv<W: Write>(w: &mut W, events: &[TagEvent]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{}", e.timestamp_ps, e.channel)?;
    }
    Ok(())
}

/// Reads a CSV tag file fully, checking the header, channel range and ordering.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TagEvent>> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    match lines.next().map(|(_, l)| l).transpose()? {
        Some(line) if line.trim() == CSV_HEADER => {}
        Some(_) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut events: Vec<TagEvent> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let (ts, ch) = trimmed
            .split_once(',')
            .ok_or_else(|| parse_err("expected two fields".into()))?;
        let timestamp_ps: u64 = ts
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("timestamp: {e}")))?;
        let channel: u8 = ch
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("channel: {e}")))?;
        if channel > 3 {
            return Err(parse_err(format!("channel {channel} out of range")));
        }
        if events.last().is_some_and(|p| p.timestamp_ps > timestamp_ps) {
            return Err(parse_err("timestamps not ascending".into()));
        }
        events.push(TagEvent {
            timestamp_ps,
            channel,
        });
    }
    Ok(events)
}
