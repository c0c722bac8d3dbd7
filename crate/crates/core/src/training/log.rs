use std::fmt::Write as _;

pub const TRAIN_LOG_HEADER: &str = "step,lr,train_loss,val_loss,val_metric";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRecord {
    pub step: u64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    Step(StepRecord),
    Validation(ValidationRecord),
}

/// Ordered training and validation events. The best pointer follows the
/// highest validation metric; the earliest event wins ties.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    events: Vec<Event>,
    best: Option<ValidationRecord>,
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_step(&mut self, step: u64, lr: f64, train_loss: f64) {
        self.events.push(Event::Step(StepRecord { step, lr, train_loss }));
    }

    /// Returns true when this event became the new best.
    pub fn record_validation(&mut self, step: u64, val_loss: f64, val_metric: f64) -> bool {
        let rec = ValidationRecord { step, val_loss, val_metric };
        self.events.push(Event::Validation(rec));
        let improved = self.best.is_none_or(|b| val_metric > b.val_metric);
        if improved {
            self.best = Some(rec);
        }
        improved
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.events.iter().filter_map(|e| match e {
            Event::Step(s) => Some(s),
            Event::Validation(_) => None,
        })
    }

    pub fn validations(&self) -> impl Iterator<Item = &ValidationRecord> {
        self.events.iter().filter_map(|e| match e {
            Event::Validation(v) => Some(v),
            Event::Step(_) => None,
        })
    }

    pub fn best(&self) -> Option<&ValidationRecord> {
        self.best.as_ref()
    }

    pub fn last_step(&self) -> u64 {
        self.steps().last().map_or(0, |s| s.step)
    }

    /// Appends another log's events, keeping the better best pointer.
    pub fn extend(&mut self, other: &TrainLog) {
        self.events.extend_from_slice(&other.events);
        if let Some(b) = other.best {
            if self.best.is_none_or(|own| b.val_metric > own.val_metric) {
                self.best = Some(b);
            }
        }
    }

    /// One row per event. Step rows leave the validation columns empty and
    /// validation rows leave `lr` and `train_loss` empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        for e in &self.events {
            match e {
                Event::Step(r) => writeln!(s, "{},{},{},,", r.step, r.lr, r.train_loss),
                Event::Validation(r) => writeln!(s, "{},,,{},{}", r.step, r.val_loss, r.val_metric),
            }
            .expect("writing to a String");
        }
        s
    }
}
