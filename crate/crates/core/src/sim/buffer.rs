use std::collections::VecDeque;

use thiserror::Error;

use super::Action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BufferError {
    #[error("buffer holds {len} of {capacity} actions")]
    BufferNotFull { len: usize, capacity: usize },
}

/// FIFO of the most recent actions used to decide sub-goal arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBuffer {
    capacity: usize,
    delta: f64,
    actions: VecDeque<Action>,
}

impl ActionBuffer {
    pub fn new(capacity: usize, delta: f64) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, delta, actions: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.actions.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.actions.clear();
    }

    pub fn push(&mut self, a: Action) {
        if self.actions.len() == self.capacity {
            self.actions.pop_front();
        }
        self.actions.push_back(a);
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.actions.iter()
    }

    /// Mean translation of the buffered actions.
    pub fn mean(&self) -> (f64, f64) {
        let n = self.actions.len().max(1) as f64;
        let (sx, sy) = self.actions.iter().fold((0.0, 0.0), |(x, y), a| (x + a.dx, y + a.dy));
        (sx / n, sy / n)
    }

    /// Largest L-infinity distance from a buffered action to the mean.
    pub fn spread(&self) -> f64 {
        let (mx, my) = self.mean();
        self.actions
            .iter()
            .map(|a| (a.dx - mx).abs().max((a.dy - my).abs()))
            .fold(0.0, f64::max)
    }

    /// True when every buffered action lies within `delta` (L-infinity) of
    /// the buffer mean.
    pub fn goal_reached(&self) -> Result<bool, BufferError> {
        if !self.is_full() {
            return Err(BufferError::BufferNotFull { len: self.len(), capacity: self.capacity });
        }
        Ok(self.spread() < self.delta)
    }

    /// Arrival test used by the executor: low spread and a near-zero mean,
    /// so steady saturated motion is not mistaken for arrival.
    pub fn settled(&self) -> bool {
        let (mx, my) = self.mean();
        self.goal_reached().unwrap_or(false) && mx.abs().max(my.abs()) < self.delta
    }
}

/// Index of the first action after which `goal_reached` holds, scanning a
/// recorded trace with a fresh buffer.
pub fn first_trigger(trace: &[Action], capacity: usize, delta: f64) -> Option<usize> {
    let mut buf = ActionBuffer::new(capacity, delta);
    for (i, a) in trace.iter().enumerate() {
        buf.push(*a);
        if buf.goal_reached() == Ok(true) {
            return Some(i);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Grip;

    #[test]
    fn identical_zero_actions_trigger() {
        let mut b = ActionBuffer::new(10, 0.5);
        for _ in 0..10 {
            b.push(Action::hold());
        }
        assert_eq!(b.goal_reached(), Ok(true));
        assert!(b.settled());
    }

    #[test]
    fn alternating_saturated_actions_do_not_trigger() {
        let mut b = ActionBuffer::new(10, 0.5);
        for i in 0..10 {
            let dx = if i % 2 == 0 { 10.0 } else { -10.0 };
            b.push(Action::new(dx, 0.0, Grip::Hold));
        }
        assert_eq!(b.goal_reached(), Ok(false));
    }

    #[test]
    fn partial_buffer_is_an_error() {
        let mut b = ActionBuffer::new(3, 0.5);
        b.push(Action::hold());
        assert_eq!(b.goal_reached(), Err(BufferError::BufferNotFull { len: 1, capacity: 3 }));
    }

    #[test]
    fn steady_motion_is_not_settled() {
        let mut b = ActionBuffer::new(5, 0.5);
        for _ in 0..5 {
            b.push(Action::new(10.0, 0.0, Grip::Hold));
        }
        assert_eq!(b.goal_reached(), Ok(true));
        assert!(!b.settled());
    }

    #[test]
    fn oldest_action_is_evicted() {
        let mut b = ActionBuffer::new(2, 0.5);
        b.push(Action::new(1.0, 0.0, Grip::Hold));
        b.push(Action::new(2.0, 0.0, Grip::Hold));
        b.push(Action::new(3.0, 0.0, Grip::Hold));
        let xs: Vec<f64> = b.actions().map(|a| a.dx).collect();
        assert_eq!(xs, vec![2.0, 3.0]);
    }
}
