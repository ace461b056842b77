/// Pilot-only slots padding each end of a block.
pub const GUARD_SLOTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Quantum,
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub kind: SlotKind,
    pub index: usize,
}

/// Time-slot layout of a block: `pilot_ratio` pilots before every quantum
/// symbol, with trailing pilots so each quantum slot has a pilot on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSchedule {
    pub slots: Vec<Slot>,
    pub pilot_amplitude: f64,
    pub pilot_ratio: usize,
}

impl FrameSchedule {
    pub fn build(n_quantum: usize, pilot_ratio: u32, pilot_amplitude: f64) -> Self {
        let r = pilot_ratio.max(1) as usize;
        let mut slots = Vec::with_capacity(n_quantum * (r + 1) + r + 2 * GUARD_SLOTS);
        let mut pilots = 0;
        let mut push_pilot = |slots: &mut Vec<Slot>| {
            slots.push(Slot { kind: SlotKind::Pilot, index: pilots });
            pilots += 1;
        };
        for _ in 0..GUARD_SLOTS {
            push_pilot(&mut slots);
        }
        for q in 0..n_quantum {
            for _ in 0..r {
                push_pilot(&mut slots);
            }
            slots.push(Slot { kind: SlotKind::Quantum, index: q });
        }
        for _ in 0..r + GUARD_SLOTS {
            push_pilot(&mut slots);
        }
        FrameSchedule { slots, pilot_amplitude, pilot_ratio: r }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn quantum_count(&self) -> usize {
        self.slots.iter().filter(|s| s.kind == SlotKind::Quantum).count()
    }

    /// Slot position of quantum symbol `q`.
    pub fn quantum_slot(&self, q: usize) -> usize {
        GUARD_SLOTS + q * (self.pilot_ratio + 1) + self.pilot_ratio
    }

    pub fn has_pilot_neighbour(&self, s: usize) -> bool {
        let before = s > 0 && self.slots[s - 1].kind == SlotKind::Pilot;
        let after = s + 1 < self.slots.len() && self.slots[s + 1].kind == SlotKind::Pilot;
        before || after
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_one_to_one() {
        let f = FrameSchedule::build(5, 1, 3.0);
        assert_eq!(f.quantum_count(), 5);
        for q in 0..5 {
            let s = f.quantum_slot(q);
            assert_eq!(f.slots[s], Slot { kind: SlotKind::Quantum, index: q });
            assert_eq!(f.slots[s - 1].kind, SlotKind::Pilot);
            assert_eq!(f.slots[s + 1].kind, SlotKind::Pilot);
        }
        assert_eq!(f.len(), 2 * GUARD_SLOTS + 11);
    }

    #[test]
    fn higher_pilot_ratio() {
        let f = FrameSchedule::build(4, 3, 1.0);
        let seen: Vec<usize> = f.slots.iter().filter(|s| s.kind == SlotKind::Quantum).map(|s| s.index).collect();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert_eq!(f.quantum_slot(2), GUARD_SLOTS + 2 * 4 + 3);
    }
}
