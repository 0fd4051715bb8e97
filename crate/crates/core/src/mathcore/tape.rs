//! Reverse-mode automatic differentiation through recorded, replayable graphs.
//!
//! A [`Var`] records every operation it takes part in onto a thread-local
//! recorder. Finishing the recording yields a [`Graph`]: a flat list of
//! operations that can be re-evaluated for new inputs ([`Graph::forward`]) and
//! differentiated ([`Graph::reverse`]) without recording again. Operations on
//! constants are folded at record time, so multiplications by structural zeros
//! never reach the graph.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::scalar::{prim, Real};

const CONST: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Op {
    Input(u32),
    Const(f64),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    AddC(u32, f64),
    MulC(u32, f64),
    DivC(u32, f64),
    /// `c - a`
    CSub(f64, u32),
    /// `c / a`
    CDiv(f64, u32),
    Neg(u32),
    Sqrt(u32),
    Sin(u32),
    Cos(u32),
    Acos(u32),
    Exp(u32),
    Ln(u32),
    Abs(u32),
    Atan2(u32, u32),
    Max(u32, u32),
    Min(u32, u32),
    /// `if l <= r { t } else { f }`
    SelLe(u32, u32, u32, u32),
}

struct Recorder {
    ops: Vec<Op>,
    values: Vec<f64>,
    n_inputs: u32,
}

thread_local! {
    static RECORDER: RefCell<Option<Recorder>> = const { RefCell::new(None) };
}

fn push(op: Op, value: f64) -> u32 {
    RECORDER.with(|r| {
        let mut guard = r.borrow_mut();
        let rec = guard
            .as_mut()
            .expect("Var operation outside of an active recording");
        let id = rec.ops.len() as u32;
        assert!(id != CONST, "graph too large");
        rec.ops.push(op);
        rec.values.push(value);
        id
    })
}

/// A scalar that records the operations applied to it.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    v: f64,
    id: u32,
}

impl Var {
    #[inline]
    fn is_const(self) -> bool {
        self.id == CONST
    }

    #[inline]
    fn node(self) -> u32 {
        if self.is_const() {
            push(Op::Const(self.v), self.v)
        } else {
            self.id
        }
    }

    #[inline]
    fn unary(self, v: f64, op: impl FnOnce(u32) -> Op) -> Var {
        if self.is_const() {
            Var { v, id: CONST }
        } else {
            Var {
                v,
                id: push(op(self.id), v),
            }
        }
    }

    #[inline]
    fn binary(self, o: Var, v: f64, op: impl FnOnce(u32, u32) -> Op) -> Var {
        if self.is_const() && o.is_const() {
            Var { v, id: CONST }
        } else {
            let (a, b) = (self.node(), o.node());
            Var {
                v,
                id: push(op(a, b), v),
            }
        }
    }

    /// True when the value is independent of every recorded input.
    pub fn is_constant(self) -> bool {
        self.is_const()
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        let v = self.v + o.v;
        match (self.is_const(), o.is_const()) {
            (true, true) => Var { v, id: CONST },
            (true, false) if self.v == 0.0 => o,
            (false, true) if o.v == 0.0 => self,
            (true, false) => Var { v, id: push(Op::AddC(o.id, self.v), v) },
            (false, true) => Var { v, id: push(Op::AddC(self.id, o.v), v) },
            (false, false) => Var { v, id: push(Op::Add(self.id, o.id), v) },
        }
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        let v = self.v - o.v;
        match (self.is_const(), o.is_const()) {
            (true, true) => Var { v, id: CONST },
            (true, false) if self.v == 0.0 => -o,
            (false, true) if o.v == 0.0 => self,
            (true, false) => Var { v, id: push(Op::CSub(self.v, o.id), v) },
            (false, true) => Var { v, id: push(Op::AddC(self.id, -o.v), v) },
            (false, false) => Var { v, id: push(Op::Sub(self.id, o.id), v) },
        }
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        let v = self.v * o.v;
        match (self.is_const(), o.is_const()) {
            (true, true) => Var { v, id: CONST },
            (true, false) => mul_const(o, self.v, v),
            (false, true) => mul_const(self, o.v, v),
            (false, false) => Var { v, id: push(Op::Mul(self.id, o.id), v) },
        }
    }
}

#[inline]
fn mul_const(x: Var, c: f64, v: f64) -> Var {
    if c == 0.0 {
        Var { v: 0.0, id: CONST }
    } else if c == 1.0 {
        x
    } else if c == -1.0 {
        -x
    } else {
        Var { v, id: push(Op::MulC(x.id, c), v) }
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let v = self.v / o.v;
        match (self.is_const(), o.is_const()) {
            (true, true) => Var { v, id: CONST },
            (true, false) if self.v == 0.0 => Var { v: 0.0, id: CONST },
            (true, false) => Var { v, id: push(Op::CDiv(self.v, o.id), v) },
            (false, true) if o.v == 1.0 => self,
            (false, true) => Var { v, id: push(Op::DivC(self.id, o.v), v) },
            (false, false) => Var { v, id: push(Op::Div(self.id, o.id), v) },
        }
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.v, Op::Neg)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, c: f64) -> Var {
        self + Var::cst(c)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, c: f64) -> Var {
        self - Var::cst(c)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, c: f64) -> Var {
        self * Var::cst(c)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, c: f64) -> Var {
        self / Var::cst(c)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Var {
            #[inline]
            fn $m(&mut self, o: Var) {
                *self = *self $op o;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl Real for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        Var { v, id: CONST }
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        self.unary(self.v.sqrt(), Op::Sqrt)
    }
    fn sin(self) -> Self {
        self.unary(self.v.sin(), Op::Sin)
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), Op::Cos)
    }
    fn acos(self) -> Self {
        self.unary(self.v.acos(), Op::Acos)
    }
    fn exp(self) -> Self {
        self.unary(self.v.exp(), Op::Exp)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), Op::Ln)
    }
    fn abs(self) -> Self {
        self.unary(self.v.abs(), Op::Abs)
    }
    fn atan2(self, x: Self) -> Self {
        self.binary(x, self.v.atan2(x.v), Op::Atan2)
    }
    fn max(self, o: Self) -> Self {
        self.binary(o, prim::max(self.v, o.v), Op::Max)
    }
    fn min(self, o: Self) -> Self {
        self.binary(o, prim::min(self.v, o.v), Op::Min)
    }
    fn select_le(l: Self, r: Self, t: Self, f: Self) -> Self {
        let v = prim::select_le(l.v, r.v, t.v, f.v);
        if l.is_const() && r.is_const() {
            return if l.v <= r.v { t } else { f };
        }
        if t.is_const() && f.is_const() && t.v.to_bits() == f.v.to_bits() {
            return t;
        }
        let (a, b, c, d) = (l.node(), r.node(), t.node(), f.node());
        Var {
            v,
            id: push(Op::SelLe(a, b, c, d), v),
        }
    }
}

/// Graph output: either a node or a value that turned out to be input-independent.
#[derive(Clone, Copy, Debug)]
enum Out {
    Node(u32),
    Const(f64),
}

/// A recorded computation with a fixed structure, replayable for any input.
#[derive(Clone, Debug)]
pub struct Graph {
    ops: Vec<Op>,
    n_inputs: usize,
    outputs: Vec<Out>,
}

/// Active recording session. Dropping it without [`Recording::finish`] discards
/// the tape.
pub struct Recording {
    inputs: Vec<Var>,
}

impl Recording {
    /// Starts recording on this thread with the given input values.
    ///
    /// Panics if a recording is already active on the current thread.
    pub fn start(input_values: &[f64]) -> Recording {
        RECORDER.with(|r| {
            let mut guard = r.borrow_mut();
            assert!(guard.is_none(), "nested recordings are not supported");
            *guard = Some(Recorder {
                ops: Vec::with_capacity(1 << 12),
                values: Vec::with_capacity(1 << 12),
                n_inputs: 0,
            });
        });
        let inputs = input_values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let id = push(Op::Input(k as u32), v);
                Var { v, id }
            })
            .collect();
        RECORDER.with(|r| r.borrow_mut().as_mut().unwrap().n_inputs = input_values.len() as u32);
        Recording { inputs }
    }

    pub fn inputs(&self) -> &[Var] {
        &self.inputs
    }

    /// Ends the recording, keeping only operations that reach `outputs`.
    pub fn finish(self, outputs: &[Var]) -> Graph {
        let rec = RECORDER
            .with(|r| r.borrow_mut().take())
            .expect("recording vanished");
        let n_inputs = rec.n_inputs as usize;
        let outs: Vec<Out> = outputs
            .iter()
            .map(|o| if o.is_const() { Out::Const(o.v) } else { Out::Node(o.id) })
            .collect();
        std::mem::forget(self);
        Graph::compact(rec.ops, n_inputs, outs)
    }
}

impl Drop for Recording {
    fn drop(&mut self) {
        RECORDER.with(|r| r.borrow_mut().take());
    }
}

fn operands(op: &Op, mut f: impl FnMut(u32)) {
    match *op {
        Op::Input(_) | Op::Const(_) => {}
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::Atan2(a, b)
        | Op::Max(a, b)
        | Op::Min(a, b) => {
            f(a);
            f(b);
        }
        Op::AddC(a, _)
        | Op::MulC(a, _)
        | Op::DivC(a, _)
        | Op::CSub(_, a)
        | Op::CDiv(_, a)
        | Op::Neg(a)
        | Op::Sqrt(a)
        | Op::Sin(a)
        | Op::Cos(a)
        | Op::Acos(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Abs(a) => f(a),
        Op::SelLe(a, b, c, d) => {
            f(a);
            f(b);
            f(c);
            f(d);
        }
    }
}

fn remap(op: Op, m: &[u32]) -> Op {
    let r = |i: u32| m[i as usize];
    match op {
        Op::Input(k) => Op::Input(k),
        Op::Const(c) => Op::Const(c),
        Op::Add(a, b) => Op::Add(r(a), r(b)),
        Op::Sub(a, b) => Op::Sub(r(a), r(b)),
        Op::Mul(a, b) => Op::Mul(r(a), r(b)),
        Op::Div(a, b) => Op::Div(r(a), r(b)),
        Op::AddC(a, c) => Op::AddC(r(a), c),
        Op::MulC(a, c) => Op::MulC(r(a), c),
        Op::DivC(a, c) => Op::DivC(r(a), c),
        Op::CSub(c, a) => Op::CSub(c, r(a)),
        Op::CDiv(c, a) => Op::CDiv(c, r(a)),
        Op::Neg(a) => Op::Neg(r(a)),
        Op::Sqrt(a) => Op::Sqrt(r(a)),
        Op::Sin(a) => Op::Sin(r(a)),
        Op::Cos(a) => Op::Cos(r(a)),
        Op::Acos(a) => Op::Acos(r(a)),
        Op::Exp(a) => Op::Exp(r(a)),
        Op::Ln(a) => Op::Ln(r(a)),
        Op::Abs(a) => Op::Abs(r(a)),
        Op::Atan2(a, b) => Op::Atan2(r(a), r(b)),
        Op::Max(a, b) => Op::Max(r(a), r(b)),
        Op::Min(a, b) => Op::Min(r(a), r(b)),
        Op::SelLe(a, b, c, d) => Op::SelLe(r(a), r(b), r(c), r(d)),
    }
}

impl Graph {
    /// Drops unreachable nodes and renumbers the rest; input nodes are always kept.
    fn compact(ops: Vec<Op>, n_inputs: usize, outputs: Vec<Out>) -> Graph {
        let mut live = vec![false; ops.len()];
        for o in &outputs {
            if let Out::Node(i) = o {
                live[*i as usize] = true;
            }
        }
        for i in (0..ops.len()).rev() {
            if matches!(ops[i], Op::Input(_)) {
                live[i] = true;
            }
            if live[i] {
                operands(&ops[i], |a| live[a as usize] = true);
            }
        }
        let mut map = vec![u32::MAX; ops.len()];
        let mut out_ops = Vec::with_capacity(live.iter().filter(|l| **l).count());
        for (i, op) in ops.into_iter().enumerate() {
            if live[i] {
                map[i] = out_ops.len() as u32;
                out_ops.push(remap(op, &map));
            }
        }
        let outputs = outputs
            .into_iter()
            .map(|o| match o {
                Out::Node(i) => Out::Node(map[i as usize]),
                c => c,
            })
            .collect();
        Graph {
            ops: out_ops,
            n_inputs,
            outputs,
        }
    }

    /// Records `f` once and returns the replayable graph.
    pub fn record(input_values: &[f64], f: impl FnOnce(&[Var]) -> Vec<Var>) -> Graph {
        let rec = Recording::start(input_values);
        let inputs = rec.inputs().to_vec();
        let outs = f(&inputs);
        rec.finish(&outs)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates every node for `inputs`; `values` is resized as needed.
    pub fn forward(&self, inputs: &[f64], values: &mut Vec<f64>) {
        assert_eq!(inputs.len(), self.n_inputs, "graph input arity");
        values.clear();
        values.reserve(self.ops.len());
        for op in &self.ops {
            // Operands always precede their users, so indexing below is in bounds.
            let g = |i: u32| unsafe { *values.get_unchecked(i as usize) };
            let v = match *op {
                Op::Input(k) => inputs[k as usize],
                Op::Const(c) => c,
                Op::Add(a, b) => g(a) + g(b),
                Op::Sub(a, b) => g(a) - g(b),
                Op::Mul(a, b) => g(a) * g(b),
                Op::Div(a, b) => g(a) / g(b),
                Op::AddC(a, c) => g(a) + c,
                Op::MulC(a, c) => g(a) * c,
                Op::DivC(a, c) => g(a) / c,
                Op::CSub(c, a) => c - g(a),
                Op::CDiv(c, a) => c / g(a),
                Op::Neg(a) => -g(a),
                Op::Sqrt(a) => g(a).sqrt(),
                Op::Sin(a) => g(a).sin(),
                Op::Cos(a) => g(a).cos(),
                Op::Acos(a) => g(a).acos(),
                Op::Exp(a) => g(a).exp(),
                Op::Ln(a) => g(a).ln(),
                Op::Abs(a) => g(a).abs(),
                Op::Atan2(a, b) => g(a).atan2(g(b)),
                Op::Max(a, b) => prim::max(g(a), g(b)),
                Op::Min(a, b) => prim::min(g(a), g(b)),
                Op::SelLe(a, b, c, d) => prim::select_le(g(a), g(b), g(c), g(d)),
            };
            values.push(v);
        }
    }

    /// Output values after a call to [`Graph::forward`].
    pub fn outputs(&self, values: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.outputs.iter().map(|o| match *o {
            Out::Node(i) => values[i as usize],
            Out::Const(c) => c,
        }));
    }

    /// Evaluates the graph and returns its outputs.
    pub fn eval(&self, inputs: &[f64]) -> Vec<f64> {
        let mut values = Vec::new();
        self.forward(inputs, &mut values);
        let mut out = Vec::new();
        self.outputs(&values, &mut out);
        out
    }

    /// Vector-Jacobian product: accumulates `out_adj · ∂outputs/∂inputs` into
    /// `in_adj`. `values` must come from [`Graph::forward`] on the same inputs.
    pub fn reverse(&self, values: &[f64], out_adj: &[f64], in_adj: &mut [f64], adj: &mut Vec<f64>) {
        assert_eq!(out_adj.len(), self.outputs.len(), "graph output arity");
        assert_eq!(in_adj.len(), self.n_inputs, "graph input arity");
        assert_eq!(values.len(), self.ops.len(), "stale forward values");
        adj.clear();
        adj.resize(self.ops.len(), 0.0);
        for (o, &a) in self.outputs.iter().zip(out_adj) {
            if let Out::Node(i) = *o {
                adj[i as usize] += a;
            }
        }
        for i in (0..self.ops.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let v = |k: u32| values[k as usize];
            let mut acc = |k: u32, d: f64| adj[k as usize] += d;
            match self.ops[i] {
                Op::Input(k) => in_adj[k as usize] += a,
                Op::Const(_) => {}
                Op::Add(x, y) => {
                    acc(x, a);
                    acc(y, a);
                }
                Op::Sub(x, y) => {
                    acc(x, a);
                    acc(y, -a);
                }
                Op::Mul(x, y) => {
                    let (vx, vy) = (v(x), v(y));
                    acc(x, a * vy);
                    acc(y, a * vx);
                }
                Op::Div(x, y) => {
                    let vy = v(y);
                    acc(x, a / vy);
                    acc(y, -a * values[i] / vy);
                }
                Op::AddC(x, _) => acc(x, a),
                Op::MulC(x, c) => acc(x, a * c),
                Op::DivC(x, c) => acc(x, a / c),
                Op::CSub(_, x) => acc(x, -a),
                Op::CDiv(_, x) => acc(x, -a * values[i] / v(x)),
                Op::Neg(x) => acc(x, -a),
                Op::Sqrt(x) => acc(x, 0.5 * a / values[i]),
                Op::Sin(x) => acc(x, a * v(x).cos()),
                Op::Cos(x) => acc(x, -a * v(x).sin()),
                Op::Acos(x) => {
                    let vx = v(x);
                    acc(x, -a / (1.0 - vx * vx).sqrt());
                }
                Op::Exp(x) => acc(x, a * values[i]),
                Op::Ln(x) => acc(x, a / v(x)),
                Op::Abs(x) => {
                    let s = if v(x) >= 0.0 { 1.0 } else { -1.0 };
                    acc(x, a * s);
                }
                Op::Atan2(y, x) => {
                    let (vy, vx) = (v(y), v(x));
                    let r2 = vx * vx + vy * vy;
                    acc(y, a * vx / r2);
                    acc(x, -a * vy / r2);
                }
                Op::Max(x, y) => {
                    if v(x) >= v(y) {
                        acc(x, a)
                    } else {
                        acc(y, a)
                    }
                }
                Op::Min(x, y) => {
                    if v(x) <= v(y) {
                        acc(x, a)
                    } else {
                        acc(y, a)
                    }
                }
                Op::SelLe(l, r, t, f) => {
                    if v(l) <= v(r) {
                        acc(t, a)
                    } else {
                        acc(f, a)
                    }
                }
            }
        }
    }
}

/// Gradient of a scalar function by recording it once and running one reverse pass.
pub fn record_gradient(x: &[f64], f: impl FnOnce(&[Var]) -> Var) -> (f64, Vec<f64>) {
    let graph = Graph::record(x, |v| vec![f(v)]);
    let mut values = Vec::new();
    graph.forward(x, &mut values);
    let mut out = Vec::new();
    graph.outputs(&values, &mut out);
    let mut grad = vec![0.0; x.len()];
    let mut adj = Vec::new();
    graph.reverse(&values, &[1.0], &mut grad, &mut adj);
    (out[0], grad)
}
