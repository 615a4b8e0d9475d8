use crate::error::{Error, Result};

/// A single brightness-change event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    /// +1 (brighter) or −1 (darker).
    pub p: i8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }

    /// Canonical ordering key: time, then row, column, polarity.
    pub fn sort_key(&self) -> (u64, u16, u16, i8) {
        (self.t, self.y, self.x, self.p)
    }
}

/// Time-ordered events of a `width × height` sensor over `[t_start, t_end]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    width: usize,
    height: usize,
    t_start: u64,
    t_end: u64,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds, polarity and ordering.
    pub fn new(
        width: usize,
        height: usize,
        t_start: u64,
        t_end: u64,
        events: Vec<Event>,
    ) -> Result<Self> {
        if width == 0
            || height == 0
            || width > u16::MAX as usize + 1
            || height > u16::MAX as usize + 1
        {
            return Err(Error::Input(format!(
                "invalid sensor size {width}x{height}"
            )));
        }
        if t_end < t_start {
            return Err(Error::Input(format!(
                "stream ends ({t_end}) before it starts ({t_start})"
            )));
        }
        for (i, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::Input(format!(
                    "event {i} at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::Input(format!("event {i} has polarity {}", e.p)));
            }
            if e.t < t_start || e.t > t_end {
                return Err(Error::Input(format!(
                    "event {i} at t={} outside [{t_start}, {t_end}]",
                    e.t
                )));
            }
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::Input(format!(
                "events not sorted by time at index {}",
                i + 1
            )));
        }
        Ok(EventStream {
            width,
            height,
            t_start,
            t_end,
            events,
        })
    }

    pub fn empty(width: usize, height: usize, t_start: u64, t_end: u64) -> Result<Self> {
        Self::new(width, height, t_start, t_end, Vec::new())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn t_start(&self) -> u64 {
        self.t_start
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
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

    /// Events with `t_start <= t <= t_end`, re-bounded to that interval.
    pub fn time_slice(&self, t_start: u64, t_end: u64) -> Result<EventStream> {
        let lo = self.events.partition_point(|e| e.t < t_start);
        let hi = self.events.partition_point(|e| e.t <= t_end);
        let events = if lo < hi {
            self.events[lo..hi].to_vec()
        } else {
            Vec::new()
        };
        EventStream::new(self.width, self.height, t_start, t_end, events)
    }

    /// Events inside a spatial rectangle, with coordinates shifted to its origin.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<EventStream> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Input(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds sensor {}x{}",
                self.width, self.height
            )));
        }
        let events = self
            .events
            .iter()
            .filter(|e| {
                let (x, y) = (e.x as usize, e.y as usize);
                x >= x0 && x < x0 + width && y >= y0 && y < y0 + height
            })
            .map(|e| Event::new(e.t, e.x - x0 as u16, e.y - y0 as u16, e.p))
            .collect();
        EventStream::new(width, height, self.t_start, self.t_end, events)
    }

    /// Re-bins events onto a `width × height` sensor covering the same field
    /// of view: pixel `x` maps to `floor(x · width / self.width)`.
    pub fn rescale(&self, width: usize, height: usize) -> Result<EventStream> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "rescale target {width}x{height} has a zero dimension"
            )));
        }
        let map = |v: u16, from: usize, to: usize| ((v as usize * to) / from).min(to - 1) as u16;
        let mut events: Vec<Event> = self
            .events
            .iter()
            .map(|e| {
                Event::new(
                    e.t,
                    map(e.x, self.width, width),
                    map(e.y, self.height, height),
                    e.p,
                )
            })
            .collect();
        events.sort_by_key(Event::sort_key);
        EventStream::new(width, height, self.t_start, self.t_end, events)
    }
}
