//! Standard MIDI File reading and writing.
//!
//! Reading accepts format 0 and 1 files with metrical timing and rescales
//! every tick to 480 per quarter note. The melody is the non-drum track with
//! the most note events (ties go to the lowest track index); chord symbols are
//! recovered from marker events spelled `ROOT_QUALITY`.
//!
//! Writing always emits a format 0 file at 480 ticks per quarter.

use std::collections::{HashMap, VecDeque};

use crate::error::ScoreError;
use crate::score::{
    enforce_monophony, ChordAnnotation, Key, MeterChange, Mode, Note, Score, TimeSignature, TICKS_PER_QUARTER,
};

const DRUM_CHANNEL: u8 = 9;
const DEFAULT_TEMPO_US: u32 = 500_000;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, ScoreError> {
        let b = *self.data.get(self.pos).ok_or_else(|| ScoreError::MalformedFile("unexpected end of data".into()))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Result<u8, ScoreError> {
        self.data.get(self.pos).copied().ok_or_else(|| ScoreError::MalformedFile("unexpected end of data".into()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ScoreError> {
        if self.remaining() < n {
            return Err(ScoreError::MalformedFile(format!(
                "chunk claims {n} bytes but only {} remain",
                self.remaining()
            )));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ScoreError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, ScoreError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(ScoreError::MalformedFile("variable-length quantity longer than 4 bytes".into()))
    }
}

#[derive(Debug, Default)]
struct TrackEvents {
    notes: Vec<(Note, u8)>,
    end_tick: u64,
}

#[derive(Debug, Default)]
struct Meta {
    tempo_us: Option<u32>,
    time_signatures: Vec<(u64, TimeSignature)>,
    key: Option<Key>,
    markers: Vec<(u64, String)>,
    name: Option<String>,
}

/// Round `tick * 480 / tpq` to the nearest integer, halves upward.
pub fn rescale_tick(tick: u64, tpq: u32) -> u32 {
    let num = tick * 2 * TICKS_PER_QUARTER as u64 + tpq as u64;
    (num / (2 * tpq as u64)) as u32
}

pub fn read_smf(bytes: &[u8]) -> Result<Score, ScoreError> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4).map_err(|_| ScoreError::MalformedFile("missing MThd header".into()))? != b"MThd" {
        return Err(ScoreError::MalformedFile("missing MThd header".into()));
    }
    let header_len = cur.u32()? as usize;
    if header_len < 6 {
        return Err(ScoreError::MalformedFile(format!("header length {header_len} < 6")));
    }
    let header = cur.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let n_tracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(ScoreError::UnsupportedFormat("SMF format 2 (independent sequences)".into())),
        other => return Err(ScoreError::MalformedFile(format!("unknown SMF format {other}"))),
    }
    if division & 0x8000 != 0 {
        return Err(ScoreError::UnsupportedFormat("SMPTE time division".into()));
    }
    let tpq = division as u32;
    if tpq == 0 {
        return Err(ScoreError::MalformedFile("zero ticks per quarter".into()));
    }

    let mut meta = Meta::default();
    let mut tracks = Vec::new();
    while tracks.len() < n_tracks as usize && cur.remaining() > 0 {
        let id = cur.take(4)?;
        let len = cur.u32()? as usize;
        let body = cur.take(len)?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, &mut meta)?);
        }
    }
    if tracks.len() < n_tracks as usize {
        return Err(ScoreError::MalformedFile(format!("header announces {n_tracks} tracks, found {}", tracks.len())));
    }

    let melody = tracks
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.notes.iter().filter(|(_, ch)| *ch != DRUM_CHANNEL).count()))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .filter(|&(_, count)| count > 0)
        .map(|(i, _)| i)
        .ok_or(ScoreError::NoNotes)?;

    let mut notes: Vec<Note> = tracks[melody]
        .notes
        .iter()
        .filter(|(_, ch)| *ch != DRUM_CHANNEL)
        .map(|&(n, _)| n)
        .filter_map(|n| {
            let onset = rescale_tick(n.onset as u64, tpq);
            let offset = rescale_tick(n.offset() as u64, tpq);
            (n.duration > 0).then(|| Note { onset, duration: offset.saturating_sub(onset).max(1), ..n })
        })
        .collect();
    enforce_monophony(&mut notes);

    let mut signatures: Vec<(u32, TimeSignature)> =
        meta.time_signatures.iter().map(|&(t, ts)| (rescale_tick(t, tpq), ts)).collect();
    signatures.sort_by_key(|s| s.0);
    let mut time_signature = TimeSignature::COMMON;
    let mut meter_changes: Vec<MeterChange> = Vec::new();
    for (tick, ts) in signatures {
        if tick == 0 {
            time_signature = ts;
            continue;
        }
        let current = meter_changes.last().map(|m| m.time_signature).unwrap_or(time_signature);
        match meter_changes.last_mut() {
            Some(last) if last.tick == tick => last.time_signature = ts,
            _ if current == ts => {}
            _ => meter_changes.push(MeterChange { tick, time_signature: ts }),
        }
    }

    let mut chords: Vec<ChordAnnotation> = Vec::new();
    let mut markers: Vec<(u32, &str)> = meta.markers.iter().map(|(t, s)| (rescale_tick(*t, tpq), s.as_str())).collect();
    markers.sort_by_key(|m| m.0);
    for (onset, text) in markers {
        if let Ok(chord) = text.parse() {
            match chords.last_mut() {
                Some(last) if last.onset == onset => last.chord = chord,
                _ => chords.push(ChordAnnotation { onset, chord }),
            }
        }
    }

    let track_end = tracks.iter().map(|t| rescale_tick(t.end_tick, tpq)).max().unwrap_or(0);
    let last_offset = notes.iter().map(Note::offset).max().unwrap_or(0);
    let tempo_us = meta.tempo_us.unwrap_or(DEFAULT_TEMPO_US);

    Ok(Score {
        ticks_per_quarter: TICKS_PER_QUARTER,
        time_signature,
        meter_changes,
        tempo_bpm: 60_000_000.0 / tempo_us as f64,
        key: meta.key,
        notes,
        chords,
        end_tick: track_end.max(last_offset),
        source_id: meta.name.unwrap_or_default(),
    })
}

fn parse_track(body: &[u8], meta: &mut Meta) -> Result<TrackEvents, ScoreError> {
    let mut cur = Cursor::new(body);
    let mut track = TrackEvents::default();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut pending: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut order: Vec<(u64, u8, u8, u8, u64)> = Vec::new();

    while cur.remaining() > 0 {
        tick += cur.vlq()? as u64;
        let mut status = cur.peek()?;
        if status & 0x80 != 0 {
            cur.u8()?;
        } else {
            status = running.ok_or_else(|| ScoreError::MalformedFile("data byte without running status".into()))?;
        }
        match status {
            0xff => {
                let kind = cur.u8()?;
                let len = cur.vlq()? as usize;
                let data = cur.take(len)?;
                if kind == 0x2f {
                    break;
                }
                handle_meta(kind, data, tick, meta)?;
                running = None;
            }
            0xf0 | 0xf7 => {
                let len = cur.vlq()? as usize;
                cur.take(len)?;
                running = None;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data_len = if matches!(status & 0xf0, 0xc0 | 0xd0) { 1 } else { 2 };
                let d1 = cur.u8()?;
                let d2 = if data_len == 2 { cur.u8()? } else { 0 };
                if d1 > 127 || d2 > 127 {
                    return Err(ScoreError::MalformedFile("channel data byte above 127".into()));
                }
                match status & 0xf0 {
                    0x90 if d2 > 0 => pending.entry((channel, d1)).or_default().push_back((tick, d2)),
                    0x80 | 0x90 => {
                        if let Some((start, vel)) = pending.get_mut(&(channel, d1)).and_then(VecDeque::pop_front) {
                            order.push((start, channel, d1, vel, tick));
                        }
                    }
                    _ => {}
                }
            }
            other => return Err(ScoreError::MalformedFile(format!("unexpected status byte {other:#04x}"))),
        }
    }
    track.end_tick = tick;
    for ((channel, pitch), queue) in pending {
        for (start, vel) in queue {
            order.push((start, channel, pitch, vel, tick));
        }
    }
    order.sort();
    for (start, channel, pitch, vel, end) in order {
        if start > u32::MAX as u64 || end > u32::MAX as u64 {
            return Err(ScoreError::MalformedFile("tick overflow".into()));
        }
        track.notes.push((Note::new(start as u32, (end - start) as u32, pitch, vel), channel));
    }
    Ok(track)
}

fn handle_meta(kind: u8, data: &[u8], tick: u64, meta: &mut Meta) -> Result<(), ScoreError> {
    match kind {
        0x51 => {
            if data.len() != 3 {
                return Err(ScoreError::MalformedFile("tempo event must carry 3 bytes".into()));
            }
            let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
            if meta.tempo_us.is_none() && us > 0 {
                meta.tempo_us = Some(us);
            }
        }
        0x58 => {
            if data.len() < 2 || data[1] > 7 {
                return Err(ScoreError::MalformedFile("bad time signature event".into()));
            }
            meta.time_signatures.push((tick, TimeSignature::new(data[0], 1 << data[1])));
        }
        0x59 => {
            if data.len() != 2 {
                return Err(ScoreError::MalformedFile("key signature event must carry 2 bytes".into()));
            }
            if meta.key.is_none() {
                let mode = if data[1] == 1 { Mode::Minor } else { Mode::Major };
                meta.key = Some(Key::from_fifths(data[0] as i8 as i32, mode));
            }
        }
        0x06 => meta.markers.push((tick, String::from_utf8_lossy(data).into_owned())),
        0x03 if meta.name.is_none() => {
            meta.name = Some(String::from_utf8_lossy(data).into_owned());
        }
        _ => {}
    }
    Ok(())
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = ((value & 0x7f) as u8) | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Events at the same tick are ordered note-off, meta, note-on.
fn event_rank(ev: &[u8]) -> u8 {
    match ev[0] & 0xf0 {
        0x80 => 0,
        0x90 => 2,
        _ => 1,
    }
}

fn meta_event(kind: u8, data: &[u8]) -> Vec<u8> {
    let mut ev = vec![0xff, kind];
    write_vlq(&mut ev, data.len() as u32);
    ev.extend_from_slice(data);
    ev
}

fn time_signature_event(ts: TimeSignature) -> Vec<u8> {
    meta_event(0x58, &[ts.numerator, ts.denominator.trailing_zeros() as u8, 24, 8])
}

/// Encode `score` as a format 0 file at 480 ticks per quarter.
///
/// MIDI reads a note-on with velocity 0 as a note-off, so notes with
/// velocity 0 are written with velocity 1.
pub fn write_smf(score: &Score) -> Vec<u8> {
    write_smf_annotated(score, &[])
}

/// As [`write_smf`], with `texts` stored as text meta events at tick 0.
/// Readers skip them.
pub fn write_smf_annotated(score: &Score, texts: &[String]) -> Vec<u8> {
    let mut events: Vec<(u32, Vec<u8>)> = Vec::new();
    if !score.source_id.is_empty() {
        events.push((0, meta_event(0x03, score.source_id.as_bytes())));
    }
    for t in texts {
        events.push((0, meta_event(0x01, t.as_bytes())));
    }
    let us = (60_000_000.0 / score.tempo_bpm).round().clamp(1.0, 0xff_ffff as f64) as u32;
    events.push((0, meta_event(0x51, &us.to_be_bytes()[1..])));
    events.push((0, time_signature_event(score.time_signature)));
    if let Some(key) = score.key {
        let mi = u8::from(key.mode == Mode::Minor);
        events.push((0, meta_event(0x59, &[key.fifths() as i8 as u8, mi])));
    }
    for m in &score.meter_changes {
        events.push((m.tick, time_signature_event(m.time_signature)));
    }
    for c in &score.chords {
        events.push((c.onset, meta_event(0x06, c.chord.to_string().as_bytes())));
    }
    for n in &score.notes {
        events.push((n.onset, vec![0x90, n.pitch & 0x7f, n.velocity.clamp(1, 127)]));
        events.push((n.offset(), vec![0x80, n.pitch & 0x7f, 0x40]));
    }
    // Stable sort keeps the insertion order of metas sharing a tick.
    events.sort_by_key(|(t, ev)| (*t, event_rank(ev)));

    let mut track = Vec::new();
    let mut last = 0;
    for (tick, ev) in &events {
        write_vlq(&mut track, tick - last);
        track.extend_from_slice(ev);
        last = *tick;
    }
    let end = score.end_tick.max(last);
    write_vlq(&mut track, end - last);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(TICKS_PER_QUARTER as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
