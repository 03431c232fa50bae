use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// FIFO queue of trace seeds. Popping an empty buffer is the engine's
/// termination signal, so it returns `None` rather than failing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateBuffer {
    queue: VecDeque<Point2>,
}

impl CandidateBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: Point2) {
        self.queue.push_back(p);
    }

    pub fn pop(&mut self) -> Option<Point2> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point2> {
        self.queue.iter()
    }

    pub fn snapshot(&self) -> Vec<Point2> {
        self.queue.iter().copied().collect()
    }
}

impl FromIterator<Point2> for CandidateBuffer {
    fn from_iter<I: IntoIterator<Item = Point2>>(iter: I) -> Self {
        Self {
            queue: iter.into_iter().collect(),
        }
    }
}

impl Extend<Point2> for CandidateBuffer {
    fn extend<I: IntoIterator<Item = Point2>>(&mut self, iter: I) {
        self.queue.extend(iter);
    }
}
