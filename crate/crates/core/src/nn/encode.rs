use crate::error::{Error, Result};
use crate::proximity::AgentId;

/// Zero-padded layout for neighborhood inputs. Slot 0 holds the subject;
/// the remaining neighbors follow in ascending id order; unused slots are
/// zero. Critic inputs interleave `(state, action)` per slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadSpec {
    pub max_neighbors: usize,
    pub state_dim: usize,
    pub action_dim: usize,
}

/// One neighborhood member: id, state features and (for critic inputs) action.
#[derive(Clone, Copy, Debug)]
pub struct Member<'a> {
    pub id: AgentId,
    pub state: &'a [f64],
    pub action: Option<&'a [f64]>,
}

impl PadSpec {
    pub fn policy_input_dim(&self) -> usize {
        self.max_neighbors * self.state_dim
    }

    pub fn critic_input_dim(&self) -> usize {
        self.max_neighbors * (self.state_dim + self.action_dim)
    }

    /// Index range of the action in `slot` within a critic input.
    pub fn action_range(&self, slot: usize) -> std::ops::Range<usize> {
        let start = slot * (self.state_dim + self.action_dim) + self.state_dim;
        start..start + self.action_dim
    }

    /// Encodes a neighborhood. With `with_actions` every member must carry an
    /// action and the critic layout is produced; otherwise states only.
    pub fn encode<'a, I>(&self, subject: AgentId, members: I, with_actions: bool) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = Member<'a>>,
    {
        let mut members: Vec<Member<'a>> = members.into_iter().collect();
        if members.len() > self.max_neighbors {
            return Err(Error::TooManyNeighbors { got: members.len(), max: self.max_neighbors });
        }
        members.sort_by_key(|m| (m.id != subject, m.id));
        if members.first().map(|m| m.id) != Some(subject) {
            return Err(Error::InvalidArgument(format!("subject {subject} missing from its neighborhood")));
        }
        if members.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidArgument("duplicate agent in neighborhood".into()));
        }

        let slot = if with_actions { self.state_dim + self.action_dim } else { self.state_dim };
        let mut out = vec![0.0; self.max_neighbors * slot];
        for (k, m) in members.iter().enumerate() {
            if m.state.len() != self.state_dim {
                return Err(Error::DimensionMismatch { expected: self.state_dim, got: m.state.len() });
            }
            let base = k * slot;
            out[base..base + self.state_dim].copy_from_slice(m.state);
            if with_actions {
                let a = m.action.ok_or_else(|| Error::InvalidArgument(format!("agent {} has no action", m.id)))?;
                if a.len() != self.action_dim {
                    return Err(Error::DimensionMismatch { expected: self.action_dim, got: a.len() });
                }
                out[base + self.state_dim..base + slot].copy_from_slice(a);
            }
        }
        Ok(out)
    }

    /// Policy input from parallel id/state slices (`states` is flat, one
    /// `state_dim` chunk per id).
    pub fn encode_states(&self, subject: AgentId, ids: &[AgentId], states: &[f64]) -> Result<Vec<f64>> {
        self.check_flat(ids, states, self.state_dim)?;
        self.encode(
            subject,
            ids.iter().zip(states.chunks_exact(self.state_dim.max(1))).map(|(&id, s)| Member { id, state: s, action: None }),
            false,
        )
    }

    /// Critic input from parallel id/state/action slices.
    pub fn encode_joint(&self, subject: AgentId, ids: &[AgentId], states: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        self.check_flat(ids, states, self.state_dim)?;
        self.check_flat(ids, actions, self.action_dim)?;
        self.encode(
            subject,
            ids.iter()
                .zip(states.chunks_exact(self.state_dim.max(1)))
                .zip(actions.chunks_exact(self.action_dim.max(1)))
                .map(|((&id, s), a)| Member { id, state: s, action: Some(a) }),
            true,
        )
    }

    fn check_flat(&self, ids: &[AgentId], flat: &[f64], dim: usize) -> Result<()> {
        if flat.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch { expected: ids.len() * dim, got: flat.len() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SPEC: PadSpec = PadSpec { max_neighbors: 3, state_dim: 2, action_dim: 1 };

    #[test]
    fn lone_agent_is_padded() {
        let v = SPEC.encode_joint(1, &[1], &[0.5, -0.5], &[0.9]).unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(&v[..3], &[0.5, -0.5, 0.9]);
        assert!(v[3..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn full_neighborhood_subject_first() {
        let v = SPEC
            .encode_joint(2, &[0, 1, 2], &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], &[0.1, 0.2, 0.3])
            .unwrap();
        assert_eq!(v, vec![3.0, 3.0, 0.3, 1.0, 1.0, 0.1, 2.0, 2.0, 0.2]);
        assert_eq!(SPEC.action_range(0), 2..3);
        assert_eq!(SPEC.action_range(2), 8..9);
    }

    #[test]
    fn order_of_presentation_does_not_matter() {
        let a = SPEC.encode_states(0, &[0, 4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = SPEC.encode_states(0, &[2, 0, 4], &[5.0, 6.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![1.0, 2.0, 5.0, 6.0, 3.0, 4.0]);
    }

    #[test]
    fn overflow_and_missing_subject() {
        let ids = [0, 1, 2, 3];
        assert!(matches!(
            SPEC.encode_states(0, &ids, &[0.0; 8]),
            Err(Error::TooManyNeighbors { got: 4, max: 3 })
        ));
        assert!(SPEC.encode_states(5, &[0, 1], &[0.0; 4]).is_err());
        assert!(SPEC.encode_states(0, &[0, 0], &[0.0; 4]).is_err());
    }

    proptest! {
        // Ids only fix the slot order, so two neighborhoods must encode equal
        // exactly when their ordered state sequences are equal.
        #[test]
        fn encoding_is_injective(
            a in prop::collection::btree_map(0usize..6, (-5i32..5, -5i32..5), 1..3),
            b in prop::collection::btree_map(0usize..6, (-5i32..5, -5i32..5), 1..3),
        ) {
            let subject = 0usize;
            let mut a = a; let mut b = b;
            a.entry(subject).or_insert((1, 1));
            b.entry(subject).or_insert((1, 1));
            let spec = PadSpec { max_neighbors: 6, state_dim: 3, action_dim: 0 };
            // third coordinate flags presence so a zero state is distinguishable from padding
            let flat = |m: &std::collections::BTreeMap<usize, (i32, i32)>| {
                let ids: Vec<usize> = m.keys().copied().collect();
                let st: Vec<f64> = m.values().flat_map(|(x, y)| [*x as f64, *y as f64, 1.0]).collect();
                (ids, st)
            };
            let (ia, sa) = flat(&a);
            let (ib, sb) = flat(&b);
            let ea = spec.encode_states(subject, &ia, &sa).unwrap();
            let eb = spec.encode_states(subject, &ib, &sb).unwrap();
            let seq_a: Vec<_> = a.values().collect();
            let seq_b: Vec<_> = b.values().collect();
            prop_assert_eq!(seq_a == seq_b, ea == eb);
        }
    }
}
