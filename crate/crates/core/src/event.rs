//! Event types, the `t x y p` text format and stream validation.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, ParseErrorKind, Result};

/// Sign of a detected log-intensity change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }
}

/// How polarity is encoded in the fourth column of an event file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityConvention {
    /// `-1` / `+1`
    Signed,
    /// `0` / `1`, as exported by most public DVS datasets
    #[default]
    ZeroOne,
}

impl PolarityConvention {
    fn name(self) -> &'static str {
        match self {
            PolarityConvention::Signed => "signed",
            PolarityConvention::ZeroOne => "zero_one",
        }
    }

    fn decode(self, field: &str) -> Option<Polarity> {
        let value: i64 = field.parse().ok()?;
        match self {
            PolarityConvention::Signed => Polarity::from_sign(value),
            PolarityConvention::ZeroOne => match value {
                0 => Some(Polarity::Off),
                1 => Some(Polarity::On),
                _ => None,
            },
        }
    }
}

/// One sensor firing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height as usize
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major pixel index, so ascending index is ascending `(y, x)`.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width() + x as usize
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (u16, u16) {
        ((index % self.width()) as u16, (index / self.width()) as u16)
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A time-ordered, in-bounds sequence of events.
///
/// The invariants are checked on construction and the stream is immutable
/// afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        let report = validate_stream(geometry, &events);
        if let Some(first) = report.violations.first() {
            return Err(Error::InvalidStream(format!(
                "{first} ({} violation(s) total)",
                report.violations.len()
            )));
        }
        Ok(EventStream { geometry, events })
    }

    /// Applies a stable sort by timestamp before validating.
    pub fn from_unsorted(geometry: SensorGeometry, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self::new(geometry, events)
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    DecreasingTimestamp { previous: f64, t: f64 },
    InvalidTimestamp { t: f64 },
    OutOfBounds { x: u16, y: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::DecreasingTimestamp { .. } => {
                write!(f, "decreasing timestamp at index {}", self.index)
            }
            ViolationKind::InvalidTimestamp { t } => {
                write!(f, "invalid timestamp {t} at index {}", self.index)
            }
            ViolationKind::OutOfBounds { x, y } => {
                write!(f, "pixel ({x}, {y}) out of bounds at index {}", self.index)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub count: usize,
    pub time_span: Option<(f64, f64)>,
    pub on_count: usize,
    pub off_count: usize,
    pub max_events_per_pixel: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `events` against the stream invariants and collects every violation.
pub fn validate_stream(geometry: SensorGeometry, events: &[Event]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut per_pixel = vec![0usize; geometry.pixel_count()];
    let mut on_count = 0;
    let mut previous: Option<f64> = None;

    for (index, ev) in events.iter().enumerate() {
        if !ev.t.is_finite() || ev.t < 0.0 {
            violations.push(Violation {
                index,
                kind: ViolationKind::InvalidTimestamp { t: ev.t },
            });
        } else {
            if let Some(prev) = previous {
                if ev.t < prev {
                    violations.push(Violation {
                        index,
                        kind: ViolationKind::DecreasingTimestamp { previous: prev, t: ev.t },
                    });
                }
            }
            previous = Some(ev.t);
        }
        if geometry.contains(ev.x, ev.y) {
            per_pixel[geometry.index(ev.x, ev.y)] += 1;
        } else {
            violations.push(Violation {
                index,
                kind: ViolationKind::OutOfBounds { x: ev.x, y: ev.y },
            });
        }
        if ev.p == Polarity::On {
            on_count += 1;
        }
    }

    let time_span = match (events.first(), events.last()) {
        (Some(a), Some(b)) => Some((a.t, b.t)),
        _ => None,
    };
    ValidationReport {
        count: events.len(),
        time_span,
        on_count,
        off_count: events.len() - on_count,
        max_events_per_pixel: per_pixel.into_iter().max().unwrap_or(0),
        violations,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub convention: PolarityConvention,
    /// Stable-sort events by timestamp instead of rejecting out-of-order input.
    pub sort: bool,
}

impl ParseOptions {
    pub fn new(convention: PolarityConvention) -> Self {
        ParseOptions {
            convention,
            sort: false,
        }
    }

    pub fn sorted(mut self) -> Self {
        self.sort = true;
        self
    }
}

/// A syntactically valid record together with its 1-based source line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub line: usize,
    pub event: Event,
}

fn malformed(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        kind: ParseErrorKind::Malformed(msg.into()),
    }
}

fn parse_line(line_no: usize, line: &str, convention: PolarityConvention) -> Result<Event> {
    let mut fields = line.split_whitespace();
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| malformed(line_no, format!("missing field `{name}`")))
    };
    let t_field = next("t")?;
    let x_field = next("x")?;
    let y_field = next("y")?;
    let p_field = next("p")?;
    if fields.next().is_some() {
        return Err(malformed(line_no, "expected exactly 4 fields"));
    }

    let t: f64 = t_field
        .parse()
        .map_err(|_| malformed(line_no, format!("bad timestamp `{t_field}`")))?;
    if !t.is_finite() || t < 0.0 {
        return Err(malformed(line_no, format!("timestamp {t_field} must be finite and >= 0")));
    }
    let x: u16 = x_field
        .parse()
        .map_err(|_| malformed(line_no, format!("bad x coordinate `{x_field}`")))?;
    let y: u16 = y_field
        .parse()
        .map_err(|_| malformed(line_no, format!("bad y coordinate `{y_field}`")))?;
    let p = convention.decode(p_field).ok_or_else(|| Error::Parse {
        line: line_no,
        kind: ParseErrorKind::Polarity {
            value: p_field.to_string(),
            convention: convention.name(),
        },
    })?;
    Ok(Event { t, x, y, p })
}

/// Reads `t x y p` records without checking ordering or sensor bounds.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn read_event_records<R: BufRead>(
    source: R,
    convention: PolarityConvention,
) -> Result<Vec<EventRecord>> {
    let mut records = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(EventRecord {
            line: line_no,
            event: parse_line(line_no, trimmed, convention)?,
        });
    }
    Ok(records)
}

/// Parses an event text file into a validated stream.
pub fn parse_event_text<R: BufRead>(
    source: R,
    geometry: SensorGeometry,
    options: ParseOptions,
) -> Result<EventStream> {
    let records = read_event_records(source, options.convention)?;
    let mut previous: Option<f64> = None;
    for rec in &records {
        let ev = rec.event;
        if !geometry.contains(ev.x, ev.y) {
            return Err(Error::Parse {
                line: rec.line,
                kind: ParseErrorKind::OutOfBounds {
                    x: ev.x,
                    y: ev.y,
                    width: geometry.width,
                    height: geometry.height,
                },
            });
        }
        if !options.sort {
            if let Some(prev) = previous {
                if ev.t < prev {
                    return Err(Error::Parse {
                        line: rec.line,
                        kind: ParseErrorKind::DecreasingTimestamp { t: ev.t, previous: prev },
                    });
                }
            }
            previous = Some(ev.t);
        }
    }
    let events = records.into_iter().map(|r| r.event).collect();
    if options.sort {
        EventStream::from_unsorted(geometry, events)
    } else {
        EventStream::new(geometry, events)
    }
}

/// Shortest round-trip decimal form, padded to at least six decimals.
pub(crate) fn format_timestamp(t: f64) -> String {
    let mut s = format!("{t}");
    let decimals = match s.find('.') {
        Some(dot) => s.len() - dot - 1,
        None => {
            s.push('.');
            0
        }
    };
    for _ in decimals..6 {
        s.push('0');
    }
    s
}

/// Writes one `t x y p` line per event with signed polarity.
pub fn write_event_text<W: Write>(stream: &EventStream, mut sink: W) -> std::io::Result<usize> {
    for ev in stream.events() {
        writeln!(sink, "{} {} {} {}", format_timestamp(ev.t), ev.x, ev.y, ev.p.sign())?;
    }
    sink.flush()?;
    Ok(stream.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    fn signed() -> ParseOptions {
        ParseOptions::new(PolarityConvention::Signed)
    }

    #[test]
    fn parses_single_signed_event() {
        let s = parse_event_text("0.50 3 2 1\n".as_bytes(), geom(4, 4), signed()).unwrap();
        assert_eq!(s.events(), &[Event::new(0.5, 3, 2, Polarity::On)]);
    }

    #[test]
    fn zero_one_convention_maps_zero_to_off() {
        let opts = ParseOptions::new(PolarityConvention::ZeroOne);
        let s = parse_event_text("0.1 0 0 0\n0.2 0 0 1\n".as_bytes(), geom(2, 2), opts).unwrap();
        let p: Vec<_> = s.events().iter().map(|e| e.p.sign()).collect();
        assert_eq!(p, vec![-1, 1]);
    }

    #[test]
    fn rejects_out_of_bounds() {
        let err = parse_event_text("0.1 5 0 1\n".as_bytes(), geom(4, 4), signed()).unwrap_err();
        match err {
            Error::Parse {
                line: 1,
                kind: ParseErrorKind::OutOfBounds { x: 5, .. },
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_polarity_for_convention() {
        let err = parse_event_text("0.1 0 0 0\n".as_bytes(), geom(1, 1), signed()).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                kind: ParseErrorKind::Polarity { .. },
                ..
            }
        ));
        let opts = ParseOptions::new(PolarityConvention::ZeroOne);
        assert!(parse_event_text("0.1 0 0 -1\n".as_bytes(), geom(1, 1), opts).is_err());
    }

    #[test]
    fn reports_line_number_of_malformed_line() {
        let text = "# header\n0.1 0 0 1\n\n0.2 0 zero 1\n";
        let err = parse_event_text(text.as_bytes(), geom(1, 1), signed()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_event_text("0.1 0 0\n".as_bytes(), geom(1, 1), signed()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_event_text("nan 0 0 1\n".as_bytes(), geom(1, 1), signed()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn decreasing_timestamps_rejected_unless_sorting() {
        let text = "0.2 0 0 1\n0.1 1 0 -1\n0.1 0 0 1\n";
        let err = parse_event_text(text.as_bytes(), geom(2, 1), signed()).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                line: 2,
                kind: ParseErrorKind::DecreasingTimestamp { .. }
            }
        ));
        let s = parse_event_text(text.as_bytes(), geom(2, 1), signed().sorted()).unwrap();
        // stable: the two t=0.1 events keep file order
        assert_eq!(
            s.events(),
            &[
                Event::new(0.1, 1, 0, Polarity::Off),
                Event::new(0.1, 0, 0, Polarity::On),
                Event::new(0.2, 0, 0, Polarity::On),
            ]
        );
    }

    #[test]
    fn writes_six_decimals() {
        let s = EventStream::new(geom(4, 4), vec![Event::new(0.5, 3, 2, Polarity::On)]).unwrap();
        let mut out = Vec::new();
        assert_eq!(write_event_text(&s, &mut out).unwrap(), 1);
        assert_eq!(String::from_utf8(out).unwrap(), "0.500000 3 2 1\n");

        let mut out = Vec::new();
        assert_eq!(write_event_text(&EventStream::empty(geom(1, 1)), &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn timestamp_formatting() {
        assert_eq!(format_timestamp(0.0), "0.000000");
        assert_eq!(format_timestamp(12.0), "12.000000");
        assert_eq!(format_timestamp(0.1234567), "0.1234567");
    }

    #[test]
    fn validation_reports() {
        let g = geom(4, 4);
        let ok = vec![
            Event::new(0.1, 0, 0, Polarity::On),
            Event::new(0.2, 1, 0, Polarity::Off),
            Event::new(0.2, 0, 0, Polarity::On),
        ];
        let r = validate_stream(g, &ok);
        assert_eq!(r.count, 3);
        assert!(r.violations.is_empty());
        assert_eq!(r.max_events_per_pixel, 2);
        assert_eq!(r.time_span, Some((0.1, 0.2)));

        let bad = vec![Event::new(0.2, 0, 0, Polarity::On), Event::new(0.1, 0, 0, Polarity::On)];
        let r = validate_stream(g, &bad);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].to_string(), "decreasing timestamp at index 1");

        let r = validate_stream(g, &[]);
        assert_eq!(r.count, 0);
        assert!(r.violations.is_empty());
        assert_eq!(r.time_span, None);

        let r = validate_stream(g, &[Event::new(f64::NAN, 9, 0, Polarity::On)]);
        assert_eq!(r.violations.len(), 2);
        assert!(EventStream::new(g, vec![Event::new(-1.0, 0, 0, Polarity::On)]).is_err());
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..8, 1u16..8).prop_flat_map(|(w, h)| {
            prop::collection::vec((0u32..2_000_000, 0..w, 0..h, any::<bool>()), 0..50).prop_map(
                move |raw| {
                    let mut events: Vec<Event> = raw
                        .into_iter()
                        .map(|(t, x, y, on)| {
                            let p = if on { Polarity::On } else { Polarity::Off };
                            Event::new(t as f64 * 1e-6, x, y, p)
                        })
                        .collect();
                    events.sort_by(|a, b| a.t.total_cmp(&b.t));
                    EventStream::new(geom(w, h), events).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(stream in arb_stream()) {
            let mut buf = Vec::new();
            write_event_text(&stream, &mut buf).unwrap();
            let back = parse_event_text(buf.as_slice(), stream.geometry(), signed()).unwrap();
            prop_assert_eq!(back, stream);
        }

        #[test]
        fn validation_agrees_with_constructor(
            raw in prop::collection::vec((0u32..100, 0u16..5, 0u16..5), 0..20)
        ) {
            let g = geom(4, 4);
            let events: Vec<Event> = raw
                .into_iter()
                .map(|(t, x, y)| Event::new(t as f64, x, y, Polarity::On))
                .collect();
            let in_bounds = events.iter().all(|e| g.contains(e.x, e.y));
            let sorted = events.windows(2).all(|w| w[0].t <= w[1].t);
            let report = validate_stream(g, &events);
            prop_assert_eq!(report.is_valid(), in_bounds && sorted);
            prop_assert_eq!(EventStream::new(g, events).is_ok(), in_bounds && sorted);
        }
    }
}
