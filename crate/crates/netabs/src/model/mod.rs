//! Switched linear subsystems, switching signals and network topology.
//!
//! Subsystems and modes are indexed from zero. A network stores a list of
//! subsystem *kinds* (matrix data) and a list of *nodes*, each node
//! referring to a kind, so that large homogeneous networks share one copy of
//! the matrices.

mod spec;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

pub use spec::{Design, KindDesign, ModeDesign, NetworkFile};

/// Matrices of one mode: `x+ = A x + D w + B u + H d`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrices {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub h: Option<Mat>,
}

impl ModeMatrices {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Self {
        Self {
            a,
            b,
            c,
            d,
            h: None,
        }
    }

    pub fn with_exogenous(mut self, h: Mat) -> Self {
        self.h = Some(h);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn internal_dim(&self) -> usize {
        self.d.ncols()
    }
}

/// A switched linear subsystem (all modes share state, input and output sizes).
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSubsystem {
    modes: Vec<ModeMatrices>,
}

impl SwitchedSubsystem {
    pub fn new(modes: Vec<ModeMatrices>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Parse("subsystem needs at least one mode".into()))?;
        let n = first.a.nrows();
        let m = first.b.ncols();
        let q = first.c.nrows();
        let nd = first.h.as_ref().map(|h| h.ncols());
        for (s, md) in modes.iter().enumerate() {
            let ctx = |what: &str| format!("mode {s}: {what}");
            check(ctx("A rows"), n, md.a.nrows())?;
            check(ctx("A columns"), n, md.a.ncols())?;
            check(ctx("B rows"), n, md.b.nrows())?;
            check(ctx("B columns"), m, md.b.ncols())?;
            check(ctx("C rows"), q, md.c.nrows())?;
            check(ctx("C columns"), n, md.c.ncols())?;
            check(ctx("D rows"), n, md.d.nrows())?;
            match (&md.h, nd) {
                (Some(h), Some(nd)) => {
                    check(ctx("H rows"), n, h.nrows())?;
                    check(ctx("H columns"), nd, h.ncols())?;
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Parse(format!(
                        "mode {s}: exogenous matrix H must be given in every mode or none"
                    )))
                }
            }
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[ModeMatrices] {
        &self.modes
    }

    pub fn mode(&self, s: usize) -> &ModeMatrices {
        &self.modes[s]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.modes[0].a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.modes[0].b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.modes[0].c.nrows()
    }

    pub fn exogenous_dim(&self) -> usize {
        self.modes[0].h.as_ref().map_or(0, |h| h.ncols())
    }
}

fn check(context: String, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

/// Mode selection over discrete time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingSignal {
    Constant(usize),
    /// Mode `sequence[((k + offset) / period) % len]`.
    Periodic {
        period: usize,
        #[serde(default)]
        offset: usize,
        sequence: Vec<usize>,
    },
    /// Explicit modes for `k = 0 .. len`.
    Table(Vec<usize>),
}

impl SwitchingSignal {
    pub fn alternating(period: usize) -> Self {
        SwitchingSignal::Periodic {
            period,
            offset: 0,
            sequence: vec![0, 1],
        }
    }

    pub fn mode_at(&self, k: usize) -> Option<usize> {
        match self {
            SwitchingSignal::Constant(s) => Some(*s),
            SwitchingSignal::Periodic {
                period,
                offset,
                sequence,
            } => Some(sequence[((k + offset) / period) % sequence.len()]),
            SwitchingSignal::Table(v) => v.get(k).copied(),
        }
    }

    /// Checks well-formedness against the number of modes and, for tables, the horizon.
    pub fn validate(
        &self,
        subsystem: usize,
        num_modes: usize,
        horizon: Option<usize>,
    ) -> Result<()> {
        let modes: Vec<usize> = match self {
            SwitchingSignal::Constant(s) => vec![*s],
            SwitchingSignal::Periodic {
                period, sequence, ..
            } => {
                if *period == 0 || sequence.is_empty() {
                    return Err(Error::InvalidSwitching {
                        subsystem,
                        reason: "periodic rule needs period >= 1 and a non-empty sequence".into(),
                    });
                }
                sequence.clone()
            }
            SwitchingSignal::Table(v) => {
                if let Some(hz) = horizon {
                    if v.len() < hz {
                        return Err(Error::InvalidSwitching {
                            subsystem,
                            reason: format!("table covers {} steps, horizon is {hz}", v.len()),
                        });
                    }
                }
                v.clone()
            }
        };
        for s in modes {
            if s >= num_modes {
                return Err(Error::UnknownMode {
                    subsystem,
                    mode: s,
                    available: num_modes,
                });
            }
        }
        Ok(())
    }
}

/// Where an internal input block comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Node(usize),
    Boundary(usize),
}

/// Split of a node's output into an external block and one internal block per out-neighbor.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum OutputPartition {
    /// Every block is the full output.
    #[default]
    Broadcast,
    Blocks {
        external: Vec<usize>,
        internal: BTreeMap<usize, Vec<usize>>,
    },
}

impl OutputPartition {
    pub fn external_rows(&self, q: usize) -> Vec<usize> {
        match self {
            OutputPartition::Broadcast => (0..q).collect(),
            OutputPartition::Blocks { external, .. } => external.clone(),
        }
    }

    /// Rows sent to `target`, or `None` when no block is declared.
    pub fn rows_for(&self, target: usize, q: usize) -> Option<Vec<usize>> {
        match self {
            OutputPartition::Broadcast => Some((0..q).collect()),
            OutputPartition::Blocks { internal, .. } => internal.get(&target).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: usize,
    /// In-neighbors per mode, in the order their blocks are stacked in `w`.
    pub in_neighbors: Vec<Vec<Source>>,
    pub partition: OutputPartition,
    pub switching: Arc<SwitchingSignal>,
}

/// Exogenous boundary channel of a truncated network.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryChannel {
    pub width: usize,
    /// Node of the untruncated network this channel stands for, if known.
    pub origin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kinds: Vec<Arc<SwitchedSubsystem>>,
    pub nodes: Vec<Node>,
    pub boundary: Vec<BoundaryChannel>,
}

impl Network {
    /// Validates and returns the network.
    pub fn new(
        kinds: Vec<Arc<SwitchedSubsystem>>,
        nodes: Vec<Node>,
        boundary: Vec<BoundaryChannel>,
    ) -> Result<Self> {
        let net = Self {
            kinds,
            nodes,
            boundary,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind_of(&self, i: usize) -> &SwitchedSubsystem {
        &self.kinds[self.nodes[i].kind]
    }

    /// Width of the block `src` sends to `target`.
    pub fn block_width(&self, src: Source, target: usize) -> Option<usize> {
        match src {
            Source::Node(j) => {
                let node = self.nodes.get(j)?;
                let q = self.kinds[node.kind].output_dim();
                node.partition.rows_for(target, q).map(|r| r.len())
            }
            Source::Boundary(b) => self.boundary.get(b).map(|c| c.width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            let kind = self.kinds.get(node.kind).ok_or_else(|| {
                Error::Parse(format!(
                    "subsystem {i} refers to unknown kind {}",
                    node.kind
                ))
            })?;
            let r = kind.num_modes();
            if node.in_neighbors.len() != r {
                return Err(Error::DimensionMismatch {
                    context: format!("subsystem {i}: neighbor lists per mode"),
                    expected: r,
                    found: node.in_neighbors.len(),
                });
            }
            node.switching.validate(i, r, None)?;
            let q = kind.output_dim();
            if let OutputPartition::Blocks { external, internal } = &node.partition {
                for &row in external.iter().chain(internal.values().flatten()) {
                    if row >= q {
                        return Err(Error::DimensionMismatch {
                            context: format!("subsystem {i}: output partition row"),
                            expected: q,
                            found: row,
                        });
                    }
                }
            }
            for (s, nbrs) in node.in_neighbors.iter().enumerate() {
                let mut width = 0;
                for &src in nbrs {
                    let w = self
                        .block_width(src, i)
                        .ok_or_else(|| Error::DanglingEdge {
                            target: i,
                            mode: s,
                            source_desc: match src {
                                Source::Node(j) => format!("subsystem {j}"),
                                Source::Boundary(b) => format!("boundary channel {b}"),
                            },
                        })?;
                    width += w;
                }
                let d_cols = kind.mode(s).d.ncols();
                if width != d_cols {
                    return Err(Error::DimensionMismatch {
                        context: format!("subsystem {i} mode {s}: internal input width (D columns vs neighbor outputs)"),
                        expected: width,
                        found: d_cols,
                    });
                }
            }
        }
        Ok(())
    }

    /// Out-neighbors of node `j` in mode-union form.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.in_neighbors.iter().any(|l| l.contains(&Source::Node(j))))
            .map(|(i, _)| i)
            .collect();
        out.dedup();
        out
    }

    /// Union over modes of the node sources of node `i`.
    pub fn union_in_neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.nodes[i]
            .in_neighbors
            .iter()
            .flatten()
            .filter_map(|s| match s {
                Source::Node(j) => Some(*j),
                Source::Boundary(_) => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Largest in-degree over modes, counting boundary channels.
    pub fn max_in_degree(&self, i: usize) -> usize {
        self.nodes[i]
            .in_neighbors
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(0)
    }

    pub fn mode_at(&self, i: usize, k: usize) -> Result<usize> {
        self.nodes[i]
            .switching
            .mode_at(k)
            .ok_or_else(|| Error::InvalidSwitching {
                subsystem: i,
                reason: format!("no mode defined at step {k}"),
            })
    }

    pub fn validate_horizon(&self, horizon: usize) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            node.switching
                .validate(i, self.kinds[node.kind].num_modes(), Some(horizon))?;
        }
        Ok(())
    }

    /// Offsets of each node's block in the stacked state vector.
    pub fn state_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.len() + 1);
        let mut acc = 0;
        off.push(0);
        for i in 0..self.len() {
            acc += self.kind_of(i).state_dim();
            off.push(acc);
        }
        off
    }

    pub fn assemble(&self, parts: &[Vector]) -> Vector {
        let off = self.state_offsets();
        let mut x = Vector::zeros(off[self.len()]);
        for (i, p) in parts.iter().enumerate() {
            x.rows_mut(off[i], p.len()).copy_from(p);
        }
        x
    }

    pub fn split(&self, x: &Vector) -> Vec<Vector> {
        let off = self.state_offsets();
        (0..self.len())
            .map(|i| x.rows(off[i], off[i + 1] - off[i]).into_owned())
            .collect()
    }

    /// Keeps the first `size` nodes; edges from dropped nodes become boundary channels.
    pub fn truncate(&self, size: usize) -> Result<Network> {
        if size > self.len() {
            return Err(Error::InvalidParameter(format!(
                "truncation size {size} exceeds network size {}",
                self.len()
            )));
        }
        let mut boundary = self.boundary.clone();
        let mut channel_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut nodes = Vec::with_capacity(size);
        for (i, node) in self.nodes.iter().take(size).enumerate() {
            let mut node = node.clone();
            for list in node.in_neighbors.iter_mut() {
                for src in list.iter_mut() {
                    if let Source::Node(j) = *src {
                        if j >= size {
                            let width = self.block_width(*src, i).unwrap_or(0);
                            let b = *channel_of.entry((j, i)).or_insert_with(|| {
                                boundary.push(BoundaryChannel {
                                    width,
                                    origin: Some(j),
                                });
                                boundary.len() - 1
                            });
                            *src = Source::Boundary(b);
                        }
                    }
                }
            }
            if let OutputPartition::Blocks { internal, .. } = &mut node.partition {
                internal.retain(|t, _| *t < size);
            }
            nodes.push(node);
        }
        Network::new(self.kinds.clone(), nodes, boundary)
    }
}

/// One subsystem kind repeated with neighbors given by relative offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTemplate {
    pub kind: Arc<SwitchedSubsystem>,
    /// Relative offsets of in-neighbors per mode.
    pub offsets: Vec<Vec<isize>>,
    pub switching: Arc<SwitchingSignal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wrap {
    /// Indices wrap around (ring).
    Ring,
    /// Out-of-range neighbors become boundary channels.
    Open,
}

impl NetworkTemplate {
    pub fn new(
        kind: SwitchedSubsystem,
        offsets: Vec<Vec<isize>>,
        switching: SwitchingSignal,
    ) -> Result<Self> {
        if offsets.len() != kind.num_modes() {
            return Err(Error::dims(
                "template neighbor offsets per mode",
                kind.num_modes(),
                offsets.len(),
            ));
        }
        switching.validate(0, kind.num_modes(), None)?;
        Ok(Self {
            kind: Arc::new(kind),
            offsets,
            switching: Arc::new(switching),
        })
    }

    /// Union of offsets across modes.
    pub fn union_offsets(&self) -> Vec<isize> {
        let mut v: Vec<isize> = self.offsets.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_in_degree(&self) -> usize {
        self.offsets.iter().map(|o| o.len()).max().unwrap_or(0)
    }

    /// Instantiates the first `size` nodes.
    pub fn instantiate(&self, size: usize, wrap: Wrap) -> Result<Network> {
        if size == 0 {
            return Err(Error::InvalidParameter(
                "network size must be positive".into(),
            ));
        }
        let q = self.kind.output_dim();
        let mut boundary: Vec<BoundaryChannel> = Vec::new();
        let mut channel_of: BTreeMap<isize, usize> = BTreeMap::new();
        let nodes = (0..size)
            .map(|i| {
                let in_neighbors = self
                    .offsets
                    .iter()
                    .map(|offs| {
                        offs.iter()
                            .map(|&o| {
                                let j = i as isize + o;
                                match wrap {
                                    Wrap::Ring => {
                                        Source::Node(j.rem_euclid(size as isize) as usize)
                                    }
                                    Wrap::Open if j >= 0 && j < size as isize => {
                                        Source::Node(j as usize)
                                    }
                                    Wrap::Open => {
                                        let b = *channel_of.entry(j).or_insert_with(|| {
                                            boundary.push(BoundaryChannel {
                                                width: q,
                                                origin: None,
                                            });
                                            boundary.len() - 1
                                        });
                                        Source::Boundary(b)
                                    }
                                }
                            })
                            .collect()
                    })
                    .collect();
                Node {
                    kind: 0,
                    in_neighbors,
                    partition: OutputPartition::Broadcast,
                    switching: Arc::clone(&self.switching),
                }
            })
            .collect();
        Network::new(vec![Arc::clone(&self.kind)], nodes, boundary)
    }
}
