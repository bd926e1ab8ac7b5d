//! Event streams: file formats, rasterization and the synthetic timing task.
//!
//! The canonical binary layout (all little-endian):
//!
//! ```text
//! magic "RADE" | version u16 = 1 | channel_count u16 | duration_ms f32 | label u16 | event_count u32
//! event_count × { channel u16 | time_ms f32 | polarity u8 }
//! ```
//!
//! The CSV alternative holds one `channel,time_ms,polarity` record per line with
//! an optional header; the label is taken from a `_labelK` filename suffix.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RadError, Result};
use crate::raster::{step_count, SpikeRaster};

pub const EVENT_MAGIC: &[u8; 4] = b"RADE";
pub const EVENT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 2 + 4;
const RECORD_LEN: usize = 2 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub channel: u16,
    pub time_ms: f32,
    pub polarity: u8,
}

impl Event {
    pub fn new(channel: u16, time_ms: f32, polarity: u8) -> Self {
        Self {
            channel,
            time_ms,
            polarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub channel_count: u16,
    pub duration_ms: f32,
    pub label: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarityMode {
    /// Polarity is ignored; the raster has `channel_count` rows.
    #[default]
    Merge,
    /// ON and OFF events get separate rows: `row = polarity * channel_count + channel`.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventFormat {
    CanonicalBinary,
    Csv,
}

impl EventFormat {
    /// Guesses the format from a file extension (`.csv` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::CanonicalBinary,
        }
    }
}

impl EventStream {
    /// Checks the stream invariants: positive duration and channel count, every
    /// event inside `[0, duration)`, channels in range, times nondecreasing.
    pub fn validate(&self) -> Result<()> {
        if self.channel_count == 0 {
            return Err(RadError::InvalidStream("channel_count must be positive".into()));
        }
        if !(self.duration_ms > 0.0 && self.duration_ms.is_finite()) {
            return Err(RadError::InvalidStream(format!(
                "duration_ms must be positive, got {}",
                self.duration_ms
            )));
        }
        let mut last = 0.0f32;
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.time_ms >= 0.0 && ev.time_ms < self.duration_ms) {
                return Err(RadError::InvalidStream(format!(
                    "event {i} at {} ms outside [0, {})",
                    ev.time_ms, self.duration_ms
                )));
            }
            if ev.channel >= self.channel_count {
                return Err(RadError::InvalidStream(format!(
                    "event {i} channel {} >= channel_count {}",
                    ev.channel, self.channel_count
                )));
            }
            if ev.polarity > 1 {
                return Err(RadError::InvalidStream(format!(
                    "event {i} polarity {} not in {{0, 1}}",
                    ev.polarity
                )));
            }
            if ev.time_ms < last {
                return Err(RadError::InvalidStream(format!("event {i} out of time order")));
            }
            last = ev.time_ms;
        }
        Ok(())
    }

    pub fn sort_events(&mut self) {
        // stable, so simultaneous events keep file order
        self.events.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
    }

    pub fn steps(&self, sample_time_ms: f64) -> usize {
        step_count(f64::from(self.duration_ms), sample_time_ms)
    }
}

/// Bins events with round-half-up onto the `T_s` grid; events sharing a bin collapse to one spike.
pub fn rasterize(stream: &EventStream, sample_time_ms: f64) -> Result<SpikeRaster> {
    rasterize_with(stream, sample_time_ms, PolarityMode::Merge)
}

pub fn rasterize_with(
    stream: &EventStream,
    sample_time_ms: f64,
    polarity: PolarityMode,
) -> Result<SpikeRaster> {
    if !(sample_time_ms > 0.0) {
        return Err(RadError::Config(format!(
            "sample_time_ms must be positive, got {sample_time_ms}"
        )));
    }
    stream.validate()?;
    let steps = stream.steps(sample_time_ms);
    let channels = usize::from(stream.channel_count);
    let rows = match polarity {
        PolarityMode::Merge => channels,
        PolarityMode::Split => 2 * channels,
    };
    let mut raster = SpikeRaster::zeros(rows, steps, sample_time_ms);
    for ev in &stream.events {
        let bin = (f64::from(ev.time_ms) / sample_time_ms + 0.5).floor() as usize;
        if bin >= steps {
            return Err(RadError::OutOfRange {
                channel: ev.channel,
                time_ms: ev.time_ms,
                bin,
                steps,
            });
        }
        let row = match polarity {
            PolarityMode::Merge => usize::from(ev.channel),
            PolarityMode::Split => usize::from(ev.polarity) * channels + usize::from(ev.channel),
        };
        raster.set(row, bin, true);
    }
    Ok(raster)
}

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    buf.extend_from_slice(EVENT_MAGIC);
    buf.extend_from_slice(&EVENT_VERSION.to_le_bytes());
    buf.extend_from_slice(&stream.channel_count.to_le_bytes());
    buf.extend_from_slice(&stream.duration_ms.to_le_bytes());
    buf.extend_from_slice(&stream.label.to_le_bytes());
    buf.extend_from_slice(&(stream.events.len() as u32).to_le_bytes());
    for ev in &stream.events {
        buf.extend_from_slice(&ev.channel.to_le_bytes());
        buf.extend_from_slice(&ev.time_ms.to_le_bytes());
        buf.push(ev.polarity);
    }
    buf
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(RadError::Parse {
                location: format!("byte {}", self.pos),
                message: format!(
                    "truncated {what}: need {N} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    let mut rd = ByteReader { bytes, pos: 0 };
    let magic: [u8; 4] = rd.take("magic")?;
    if &magic != EVENT_MAGIC {
        return Err(RadError::Parse {
            location: "byte 0".into(),
            message: format!("bad magic {magic:?}"),
        });
    }
    let version = u16::from_le_bytes(rd.take("version")?);
    if version != EVENT_VERSION {
        return Err(RadError::Parse {
            location: "byte 4".into(),
            message: format!("unsupported version {version}"),
        });
    }
    let channel_count = u16::from_le_bytes(rd.take("channel_count")?);
    let duration_ms = f32::from_le_bytes(rd.take("duration_ms")?);
    let label = u16::from_le_bytes(rd.take("label")?);
    let count = u32::from_le_bytes(rd.take("event_count")?) as usize;
    let mut events = Vec::with_capacity(count.min(bytes.len() / RECORD_LEN));
    for _ in 0..count {
        let channel = u16::from_le_bytes(rd.take("event channel")?);
        let time_ms = f32::from_le_bytes(rd.take("event time")?);
        let [polarity] = rd.take::<1>("event polarity")?;
        events.push(Event::new(channel, time_ms, polarity));
    }
    if rd.pos != bytes.len() {
        return Err(RadError::Parse {
            location: format!("byte {}", rd.pos),
            message: format!("{} trailing bytes", bytes.len() - rd.pos),
        });
    }
    let mut stream = EventStream {
        events,
        channel_count,
        duration_ms,
        label,
    };
    stream.sort_events();
    stream.validate()?;
    Ok(stream)
}

fn label_from_filename(path: &Path) -> Result<u16> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    stem.rsplit_once("_label")
        .and_then(|(_, k)| k.parse().ok())
        .ok_or_else(|| RadError::Parse {
            location: path.display().to_string(),
            message: "csv filename lacks a _labelK suffix".into(),
        })
}

/// Parses CSV event records. Channel count is one past the largest channel seen
/// and duration is one sample past the last event, unless overridden by the caller.
pub fn parse_csv_events(text: &str, label: u16) -> Result<EventStream> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |message: String| RadError::Parse {
            location: format!("line {}", lineno + 1),
            message,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
        }
        let parsed = (
            fields[0].parse::<u16>(),
            fields[1].parse::<f32>(),
            fields[2].parse::<u8>(),
        );
        match parsed {
            (Ok(channel), Ok(time_ms), Ok(polarity)) => {
                events.push(Event::new(channel, time_ms, polarity))
            }
            _ if lineno == 0 && fields[0].parse::<f64>().is_err() => continue,
            _ => return Err(parse_err(format!("malformed record {line:?}"))),
        }
    }
    let channel_count = events.iter().map(|e| e.channel + 1).max().unwrap_or(1);
    let duration_ms = events
        .iter()
        .map(|e| e.time_ms)
        .fold(0.0f32, f32::max)
        .floor()
        + 1.0;
    let mut stream = EventStream {
        events,
        channel_count,
        duration_ms,
        label,
    };
    stream.sort_events();
    stream.validate()?;
    Ok(stream)
}

pub fn load_events(path: &Path, format: EventFormat) -> Result<EventStream> {
    match format {
        EventFormat::CanonicalBinary => {
            let bytes = fs::read(path).map_err(|e| RadError::io(path, e))?;
            decode_events(&bytes)
        }
        EventFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| RadError::io(path, e))?;
            parse_csv_events(&text, label_from_filename(path)?)
        }
    }
}

pub fn write_events(path: &Path, stream: &EventStream) -> Result<()> {
    fs::write(path, encode_events(stream)).map_err(|e| RadError::io(path, e))
}

/// Loads every `.rade` / `.csv` file in a directory, in file-name order.
pub fn load_dir(dir: &Path) -> Result<Vec<EventStream>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| RadError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("rade") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_events(p, EventFormat::from_path(p)))
        .collect()
}

/// Generator settings for the timing-only classification task.
///
/// Every class uses the same set of firing slots `lead + k * slot_gap`; a class
/// is a permutation assigning channels to slots. Each channel fires one burst
/// per sample, so per-channel spike counts are identical across classes and
/// only the relative timing between channels carries the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTask {
    pub class_count: usize,
    pub channel_count: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub slot_gap_ms: u32,
    pub lead_ms: u32,
    pub tail_ms: u32,
    pub burst_len: u32,
    pub jitter_ms: u32,
}

impl Default for SynthTask {
    fn default() -> Self {
        Self {
            class_count: 2,
            channel_count: 16,
            samples_per_class: 150,
            seed: 0,
            slot_gap_ms: 12,
            lead_ms: 10,
            tail_ms: 40,
            burst_len: 2,
            jitter_ms: 1,
        }
    }
}

impl SynthTask {
    pub fn duration_ms(&self) -> f32 {
        (self.lead_ms + self.slot_gap_ms * self.channel_count as u32 + self.tail_ms) as f32
    }

    /// Channel-to-slot permutation of each class.
    pub fn templates(&self) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7e3a_1f00_5eed_0001);
        (0..self.class_count)
            .map(|_| {
                let mut slots: Vec<usize> = (0..self.channel_count).collect();
                slots.shuffle(&mut rng);
                slots
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<EventStream>> {
        if self.class_count < 2 || self.channel_count < 2 {
            return Err(RadError::Config(format!(
                "synthetic task needs >= 2 classes and >= 2 channels, got {} and {}",
                self.class_count, self.channel_count
            )));
        }
        if self.burst_len == 0 || self.jitter_ms > self.lead_ms {
            return Err(RadError::Config(
                "burst_len must be positive and jitter_ms <= lead_ms".into(),
            ));
        }
        if self.burst_len + 2 * self.jitter_ms > self.slot_gap_ms
            || self.burst_len + self.jitter_ms > self.tail_ms
        {
            return Err(RadError::Config(
                "slot_gap_ms and tail_ms must exceed burst_len + jitter".into(),
            ));
        }
        let templates = self.templates();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let duration_ms = self.duration_ms();
        let jitter = self.jitter_ms as i64;
        let mut streams = Vec::with_capacity(self.class_count * self.samples_per_class);
        for _ in 0..self.samples_per_class {
            for (label, slots) in templates.iter().enumerate() {
                let mut events = Vec::new();
                for (channel, &slot) in slots.iter().enumerate() {
                    let base = i64::from(self.lead_ms) + slot as i64 * i64::from(self.slot_gap_ms);
                    let start = base + rng.gen_range(-jitter..=jitter);
                    for k in 0..i64::from(self.burst_len) {
                        events.push(Event::new(channel as u16, (start + k) as f32, 1));
                    }
                }
                let mut stream = EventStream {
                    events,
                    channel_count: self.channel_count as u16,
                    duration_ms,
                    label: label as u16,
                };
                stream.sort_events();
                streams.push(stream);
            }
        }
        Ok(streams)
    }
}

/// Convenience wrapper with the remaining generator settings at their defaults.
pub fn synth_temporal_task(
    class_count: usize,
    channel_count: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<EventStream>> {
    SynthTask {
        class_count,
        channel_count,
        samples_per_class,
        seed,
        ..SynthTask::default()
    }
    .generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(events: Vec<Event>, channels: u16, duration: f32) -> EventStream {
        EventStream {
            events,
            channel_count: channels,
            duration_ms: duration,
            label: 0,
        }
    }

    #[test]
    fn rasterize_bins_events() {
        let s = stream(
            vec![Event::new(0, 0.0, 0), Event::new(1, 2.4, 0)],
            2,
            4.0,
        );
        let r = rasterize(&s, 1.0).unwrap();
        assert_eq!(r.steps(), 5);
        assert!(r.get(0, 0));
        assert!(r.get(1, 2));
        assert_eq!(r.total_spikes(), 2);
    }

    #[test]
    fn rasterize_empty_stream() {
        let r = rasterize(&stream(vec![], 3, 5.0), 1.0).unwrap();
        assert_eq!((r.neurons(), r.steps()), (3, 6));
        assert_eq!(r.total_spikes(), 0);
    }

    #[test]
    fn rasterize_collapses_bin() {
        let s = stream(vec![Event::new(0, 1.2, 0), Event::new(0, 1.4, 0)], 1, 3.0);
        let r = rasterize(&s, 1.0).unwrap();
        assert!(r.get(0, 1));
        assert_eq!(r.total_spikes(), 1);
    }

    #[test]
    fn rasterize_rounds_half_up() {
        let s = stream(vec![Event::new(0, 1.5, 0)], 1, 3.0);
        assert!(rasterize(&s, 1.0).unwrap().get(0, 2));
    }

    #[test]
    fn rasterize_rejects_bin_past_window() {
        // duration 5.6 gives 6 steps, 5.55 rounds to bin 6
        let s = stream(vec![Event::new(0, 5.55, 0)], 1, 5.6);
        assert!(matches!(
            rasterize(&s, 1.0),
            Err(RadError::OutOfRange { bin: 6, steps: 6, .. })
        ));
    }

    #[test]
    fn split_polarity_rows() {
        let s = stream(vec![Event::new(1, 0.0, 0), Event::new(1, 1.0, 1)], 2, 3.0);
        let r = rasterize_with(&s, 1.0, PolarityMode::Split).unwrap();
        assert_eq!(r.neurons(), 4);
        assert!(r.get(1, 0));
        assert!(r.get(3, 1));
    }

    #[test]
    fn csv_record_parses() {
        let s = parse_csv_events("channel,time_ms,polarity\n0,3.5,1\n", 4).unwrap();
        assert_eq!(s.events, vec![Event::new(0, 3.5, 1)]);
        assert_eq!(s.label, 4);
    }

    #[test]
    fn csv_malformed_line_reports_line() {
        let err = parse_csv_events("0,1.0,0\n1,abc,0\n", 0).unwrap_err();
        match err {
            RadError::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_label_from_filename() {
        assert_eq!(label_from_filename(Path::new("a/digit_label7.csv")).unwrap(), 7);
        assert!(label_from_filename(Path::new("digit.csv")).is_err());
    }

    #[test]
    fn binary_two_records() {
        let s = stream(vec![Event::new(0, 0.5, 1), Event::new(2, 1.0, 0)], 3, 2.0);
        let back = decode_events(&encode_events(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn binary_truncated_record_reports_offset() {
        let s = stream(vec![Event::new(0, 0.5, 1), Event::new(2, 1.0, 0)], 3, 2.0);
        let bytes = encode_events(&s);
        let err = decode_events(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            RadError::Parse { location, .. } => {
                assert_eq!(location, format!("byte {}", HEADER_LEN + RECORD_LEN + 2))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binary_sorts_unsorted_records() {
        let s = stream(vec![Event::new(0, 1.5, 0), Event::new(1, 0.5, 0)], 2, 2.0);
        let back = decode_events(&encode_events(&s)).unwrap();
        assert_eq!(back.events[0].time_ms, 0.5);
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_temporal_task(2, 8, 1, 7).unwrap();
        let b = synth_temporal_task(2, 8, 1, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_temporal_task(2, 8, 1, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_classes_share_channel_counts() {
        let task = SynthTask {
            channel_count: 8,
            samples_per_class: 3,
            seed: 7,
            ..SynthTask::default()
        };
        let streams = task.generate().unwrap();
        let counts = |s: &EventStream| {
            let mut c = vec![0; 8];
            for e in &s.events {
                c[usize::from(e.channel)] += 1;
            }
            c
        };
        let reference = counts(&streams[0]);
        for s in &streams {
            assert_eq!(counts(s), reference);
            s.validate().unwrap();
            let r = rasterize(s, 1.0).unwrap();
            assert_eq!(r.counts().iter().map(|&c| c as usize).collect::<Vec<_>>(), reference);
        }
        assert_ne!(task.templates()[0], task.templates()[1]);
    }

    #[test]
    fn synth_rejects_single_class() {
        assert!(synth_temporal_task(1, 8, 1, 0).is_err());
    }
}
