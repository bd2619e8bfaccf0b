//! Differentiable external memories: the superposition stack and the
//! fixed-size slot memory driven by five shift/rotate operators.

use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{RowMap, Tape, Var};
use crate::error::{Error, Result};

/// Unbounded stack stored as a `[depth, M]` tensor, row 0 on top. Rows past
/// the stored depth read as zero.
#[derive(Clone, Copy, Debug)]
pub struct StackState {
    entries: Var,
}

impl StackState {
    /// A stack holding nothing but the implicit zero vector.
    pub fn empty(tape: &mut Tape, mem_dim: usize) -> Result<Self> {
        Ok(Self {
            entries: tape.zeros(&[1, mem_dim])?,
        })
    }

    pub fn from_entries(tape: &Tape, entries: Var) -> Result<Self> {
        if tape.shape(entries).len() != 2 {
            return Err(Error::Shape {
                op: "stack",
                detail: format!("entries must be [depth, M], got {:?}", tape.shape(entries)),
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> Var {
        self.entries
    }

    pub fn depth(&self, tape: &Tape) -> usize {
        tape.shape(self.entries)[0]
    }

    pub fn mem_dim(&self, tape: &Tape) -> usize {
        tape.shape(self.entries)[1]
    }

    /// Topmost element as an `[M]` vector.
    pub fn top(&self, tape: &mut Tape) -> Result<Var> {
        let m = self.mem_dim(tape);
        let row = tape.slice(self.entries, 0, 1)?;
        tape.reshape(row, &[m])
    }

    /// The `k` topmost elements flattened to `[k * M]`, zero padded.
    pub fn top_k(&self, tape: &mut Tape, k: usize) -> Result<Var> {
        let (depth, m) = (self.depth(tape), self.mem_dim(tape));
        let rows = if depth >= k {
            tape.slice(self.entries, 0, k)?
        } else {
            let pad = tape.zeros(&[k - depth, m])?;
            tape.concat(&[self.entries, pad])?
        };
        tape.reshape(rows, &[k * m])
    }

    /// Element `i` (0 = top) as plain values; zero beyond the stored depth.
    pub fn read(&self, tape: &Tape, i: usize) -> Vec<f64> {
        let m = self.mem_dim(tape);
        if i < self.depth(tape) {
            tape.value(self.entries)[i * m..(i + 1) * m].to_vec()
        } else {
            vec![0.0; m]
        }
    }

    pub fn rows(&self, tape: &Tape) -> Vec<Vec<f64>> {
        (0..self.depth(tape)).map(|i| self.read(tape, i)).collect()
    }
}

/// Superposition of a push of `value` (weight `a[0]`) and a pop (weight `a[1]`):
/// `s0' = a0 n + a1 s1`, `si' = a0 s(i-1) + a1 s(i+1)`.
pub fn stack_update(
    tape: &mut Tape,
    stack: &StackState,
    actions: Var,
    value: Var,
) -> Result<StackState> {
    let (depth, m) = (stack.depth(tape), stack.mem_dim(tape));
    if tape.shape(actions) != [2] {
        return Err(Error::Shape {
            op: "stack_update",
            detail: format!("expected 2 action weights, got {:?}", tape.shape(actions)),
        });
    }
    if tape.shape(value) != [m] {
        return Err(Error::Shape {
            op: "stack_update",
            detail: format!("pushed value {:?} does not match M={m}", tape.shape(value)),
        });
    }
    let push_w = tape.index(actions, 0)?;
    let pop_w = tape.index(actions, 1)?;

    let new_top = tape.reshape(value, &[1, m])?;
    let pushed = tape.concat(&[new_top, stack.entries])?;
    let popped = if depth >= 2 {
        let rest = tape.slice(stack.entries, 1, depth - 1)?;
        let pad = tape.zeros(&[2, m])?;
        tape.concat(&[rest, pad])?
    } else {
        tape.zeros(&[2, m])?
    };
    let a = tape.scale_by(push_w, pushed)?;
    let b = tape.scale_by(pop_w, popped)?;
    Ok(StackState {
        entries: tape.add(a, b)?,
    })
}

/// Fixed number of `M`-dimensional slots, slot 0 read and written.
#[derive(Clone, Copy, Debug)]
pub struct MemoryState {
    slots: Var,
}

impl MemoryState {
    pub fn zeros(tape: &mut Tape, slots: usize, mem_dim: usize) -> Result<Self> {
        Ok(Self {
            slots: tape.zeros(&[slots, mem_dim])?,
        })
    }

    pub fn from_slots(tape: &Tape, slots: Var) -> Result<Self> {
        if tape.shape(slots).len() != 2 {
            return Err(Error::Shape {
                op: "memory",
                detail: format!("slots must be [n, M], got {:?}", tape.shape(slots)),
            });
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> Var {
        self.slots
    }

    pub fn len(&self, tape: &Tape) -> usize {
        tape.shape(self.slots)[0]
    }

    pub fn mem_dim(&self, tape: &Tape) -> usize {
        tape.shape(self.slots)[1]
    }

    pub fn first(&self, tape: &mut Tape) -> Result<Var> {
        let m = self.mem_dim(tape);
        let row = tape.slice(self.slots, 0, 1)?;
        tape.reshape(row, &[m])
    }

    pub fn rows(&self, tape: &Tape) -> Vec<Vec<f64>> {
        tape.value(self.slots)
            .chunks(self.mem_dim(tape))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryOp {
    RotateRight,
    RotateLeft,
    NoOp,
    PopLeft,
    PopRight,
}

impl MemoryOp {
    pub const ALL: [MemoryOp; 5] = [
        MemoryOp::RotateRight,
        MemoryOp::RotateLeft,
        MemoryOp::NoOp,
        MemoryOp::PopLeft,
        MemoryOp::PopRight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MemoryOp::RotateRight => "ROTATE-RIGHT",
            MemoryOp::RotateLeft => "ROTATE-LEFT",
            MemoryOp::NoOp => "NO-OP",
            MemoryOp::PopLeft => "POP-LEFT",
            MemoryOp::PopRight => "POP-RIGHT",
        }
    }

    /// Source slot for each destination slot.
    fn source(&self, i: usize, n: usize) -> Option<usize> {
        match self {
            MemoryOp::RotateRight => Some((i + n - 1) % n),
            MemoryOp::RotateLeft => Some((i + 1) % n),
            MemoryOp::NoOp => Some(i),
            MemoryOp::PopLeft => (i + 1 < n).then_some(i + 1),
            MemoryOp::PopRight => i.checked_sub(1),
        }
    }
}

impl fmt::Display for MemoryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A memory operator as an `n x n` 0/1 matrix, kept alongside its row map.
#[derive(Clone, Debug)]
pub struct OpMatrix {
    pub op: MemoryOp,
    rows: RowMap,
}

impl OpMatrix {
    pub fn new(op: MemoryOp, slots: usize) -> Self {
        let rows: Vec<Option<usize>> = (0..slots).map(|i| op.source(i, slots)).collect();
        Self {
            op,
            rows: rows.into(),
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row_map(&self) -> &RowMap {
        &self.rows
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        self.rows
            .iter()
            .map(|src| {
                let mut row = vec![0.0; n];
                if let Some(j) = src {
                    row[*j] = 1.0;
                }
                row
            })
            .collect()
    }

    /// Applies the operator to plain slot values.
    pub fn apply<T: Clone + Default>(&self, slots: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|src| src.map(|j| slots[j].clone()).unwrap_or_default())
            .collect()
    }
}

/// The five memory operators for `slots` slots, in [`MemoryOp::ALL`] order.
pub fn op_matrices(slots: usize) -> Result<Vec<OpMatrix>> {
    if slots < 2 {
        return Err(Error::InvalidArgument(format!(
            "memory needs at least 2 slots, got {slots}"
        )));
    }
    Ok(MemoryOp::ALL
        .iter()
        .map(|&op| OpMatrix::new(op, slots))
        .collect())
}

/// `M' = sum_i a_i OP_i M`, then `M'[0] += value`.
pub fn memory_update(
    tape: &mut Tape,
    memory: &MemoryState,
    actions: Var,
    value: Var,
    ops: &[OpMatrix],
) -> Result<MemoryState> {
    let (n, m) = (memory.len(tape), memory.mem_dim(tape));
    if tape.shape(actions) != [ops.len()] || ops.iter().any(|o| o.size() != n) {
        return Err(Error::Shape {
            op: "memory_update",
            detail: format!(
                "{} operators of size {n} vs action weights {:?}",
                ops.len(),
                tape.shape(actions)
            ),
        });
    }
    if tape.shape(value) != [m] {
        return Err(Error::Shape {
            op: "memory_update",
            detail: format!("written value {:?} does not match M={m}", tape.shape(value)),
        });
    }
    let maps: Rc<[RowMap]> = ops.iter().map(|o| o.row_map().clone()).collect();
    let mixed = tape.mix_rows(memory.slots, actions, &maps)?;
    Ok(MemoryState {
        slots: tape.add_to_row(mixed, value, 0)?,
    })
}
