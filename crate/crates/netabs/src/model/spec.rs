//! TOML network description.
//!
//! ```toml
//! [[kind]]
//! [[kind.mode]]
//! a = [[0.5]]
//! b = [[1.0]]
//! c = [[1.0]]
//! d = [[0.1]]
//! p = [[1.0]]          # optional design data
//!
//! [[node]]
//! kind = 0
//! in_neighbors = [[1]]
//! switching = { constant = 0 }
//! ```
//!
//! Sources in `in_neighbors` are node indices or `{ boundary = b }`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    BoundaryChannel, ModeMatrices, Network, NetworkTemplate, Node, OutputPartition, Source,
    SwitchedSubsystem, SwitchingSignal, Wrap,
};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows, Mat};

type Rows = Vec<Vec<f64>>;

/// Optional per-mode design inputs: controller gain, abstraction map and abstract data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ModeDesignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hat: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_hat: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_hat: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModeSpec {
    a: Rows,
    b: Rows,
    c: Rows,
    d: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<Rows>,
    #[serde(flatten)]
    design: ModeDesignSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KindSpec {
    #[serde(rename = "mode")]
    modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SourceSpec {
    Node(usize),
    Boundary { boundary: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PartitionSpec {
    external: Vec<usize>,
    #[serde(default)]
    internal: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeSpec {
    kind: usize,
    in_neighbors: Vec<Vec<SourceSpec>>,
    switching: SwitchingSignal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<PartitionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoundarySpec {
    width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TemplateSpec {
    #[serde(default)]
    kind: usize,
    offsets: Vec<Vec<isize>>,
    switching: SwitchingSignal,
    size: usize,
    wrap: Wrap,
}

/// Parsed network file, before or after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(rename = "kind")]
    kinds: Vec<KindSpec>,
    #[serde(default, rename = "node", skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    boundary: Vec<BoundarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<TemplateSpec>,
}

/// Design inputs per mode, as matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeDesign {
    pub k: Option<Mat>,
    pub p: Option<Mat>,
    pub d_hat: Option<Mat>,
    pub b_hat: Option<Mat>,
    pub k_hat: Option<Mat>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KindDesign {
    pub modes: Vec<ModeDesign>,
}

/// Design inputs for every kind of a network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design {
    pub kinds: Vec<KindDesign>,
}

impl Design {
    pub fn empty_for(net: &Network) -> Self {
        Self {
            kinds: net
                .kinds
                .iter()
                .map(|k| KindDesign {
                    modes: vec![ModeDesign::default(); k.num_modes()],
                })
                .collect(),
        }
    }

    pub fn mode(&self, kind: usize, s: usize) -> Option<&ModeDesign> {
        self.kinds.get(kind).and_then(|k| k.modes.get(s))
    }
}

fn opt_mat(r: &Option<Rows>, what: &str, kind: usize, s: usize) -> Result<Option<Mat>> {
    r.as_ref()
        .map(|rows| {
            from_rows(rows).map_err(|e| Error::Parse(format!("kind {kind} mode {s} {what}: {e}")))
        })
        .transpose()
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Builds the validated network and its design inputs.
    pub fn build(&self) -> Result<(Network, Design)> {
        let mut kinds = Vec::with_capacity(self.kinds.len());
        let mut design = Design::default();
        for (ki, ks) in self.kinds.iter().enumerate() {
            let mut modes = Vec::with_capacity(ks.modes.len());
            let mut kd = KindDesign::default();
            for (s, ms) in ks.modes.iter().enumerate() {
                let m = |rows: &Rows, what: &str| {
                    from_rows(rows)
                        .map_err(|e| Error::Parse(format!("kind {ki} mode {s} {what}: {e}")))
                };
                let mut mm = ModeMatrices::new(
                    m(&ms.a, "A")?,
                    m(&ms.b, "B")?,
                    m(&ms.c, "C")?,
                    m(&ms.d, "D")?,
                );
                mm.h = opt_mat(&ms.h, "H", ki, s)?;
                modes.push(mm);
                kd.modes.push(ModeDesign {
                    k: opt_mat(&ms.design.k, "K", ki, s)?,
                    p: opt_mat(&ms.design.p, "P", ki, s)?,
                    d_hat: opt_mat(&ms.design.d_hat, "D_hat", ki, s)?,
                    b_hat: opt_mat(&ms.design.b_hat, "B_hat", ki, s)?,
                    k_hat: opt_mat(&ms.design.k_hat, "K_hat", ki, s)?,
                });
            }
            let kind = SwitchedSubsystem::new(modes).map_err(|e| match e {
                Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                } => Error::DimensionMismatch {
                    context: format!("kind {ki} {context}"),
                    expected,
                    found,
                },
                other => other,
            })?;
            kinds.push(kind);
            design.kinds.push(kd);
        }

        if let Some(t) = &self.template {
            if !self.nodes.is_empty() {
                return Err(Error::Parse(
                    "give either a template or explicit nodes, not both".into(),
                ));
            }
            let kind = kinds.get(t.kind).cloned().ok_or_else(|| {
                Error::Parse(format!("template refers to unknown kind {}", t.kind))
            })?;
            let tmpl = NetworkTemplate::new(kind, t.offsets.clone(), t.switching.clone())?;
            let net = tmpl.instantiate(t.size, t.wrap)?;
            let design = Design {
                kinds: vec![design.kinds.swap_remove(t.kind)],
            };
            return Ok((net, design));
        }

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for ns in &self.nodes {
            let partition = match &ns.partition {
                None => OutputPartition::Broadcast,
                Some(p) => {
                    let mut internal = BTreeMap::new();
                    for (k, v) in &p.internal {
                        let t = k.parse::<usize>().map_err(|_| {
                            Error::Parse(format!("partition target '{k}' is not an index"))
                        })?;
                        internal.insert(t, v.clone());
                    }
                    OutputPartition::Blocks {
                        external: p.external.clone(),
                        internal,
                    }
                }
            };
            nodes.push(Node {
                kind: ns.kind,
                in_neighbors: ns
                    .in_neighbors
                    .iter()
                    .map(|l| {
                        l.iter()
                            .map(|s| match *s {
                                SourceSpec::Node(j) => Source::Node(j),
                                SourceSpec::Boundary { boundary } => Source::Boundary(boundary),
                            })
                            .collect()
                    })
                    .collect(),
                partition,
                switching: Arc::new(ns.switching.clone()),
            });
        }
        let boundary = self
            .boundary
            .iter()
            .map(|b| BoundaryChannel {
                width: b.width,
                origin: b.origin,
            })
            .collect();
        let net = Network::new(kinds.into_iter().map(Arc::new).collect(), nodes, boundary)?;
        Ok((net, design))
    }

    /// Explicit description of a network (templates are written out node by node).
    pub fn from_network(net: &Network, design: Option<&Design>) -> Self {
        let kinds = net
            .kinds
            .iter()
            .enumerate()
            .map(|(ki, k)| KindSpec {
                modes: k
                    .modes()
                    .iter()
                    .enumerate()
                    .map(|(s, m)| {
                        let d = design.and_then(|d| d.mode(ki, s));
                        let r = |x: &Option<Mat>| x.as_ref().map(to_rows);
                        ModeSpec {
                            a: to_rows(&m.a),
                            b: to_rows(&m.b),
                            c: to_rows(&m.c),
                            d: to_rows(&m.d),
                            h: m.h.as_ref().map(to_rows),
                            design: d
                                .map(|d| ModeDesignSpec {
                                    k: r(&d.k),
                                    p: r(&d.p),
                                    d_hat: r(&d.d_hat),
                                    b_hat: r(&d.b_hat),
                                    k_hat: r(&d.k_hat),
                                })
                                .unwrap_or_default(),
                        }
                    })
                    .collect(),
            })
            .collect();
        let nodes = net
            .nodes
            .iter()
            .map(|n| NodeSpec {
                kind: n.kind,
                in_neighbors: n
                    .in_neighbors
                    .iter()
                    .map(|l| {
                        l.iter()
                            .map(|s| match *s {
                                Source::Node(j) => SourceSpec::Node(j),
                                Source::Boundary(b) => SourceSpec::Boundary { boundary: b },
                            })
                            .collect()
                    })
                    .collect(),
                switching: (*n.switching).clone(),
                partition: match &n.partition {
                    OutputPartition::Broadcast => None,
                    OutputPartition::Blocks { external, internal } => Some(PartitionSpec {
                        external: external.clone(),
                        internal: internal
                            .iter()
                            .map(|(k, v)| (k.to_string(), v.clone()))
                            .collect(),
                    }),
                },
            })
            .collect();
        let boundary = net
            .boundary
            .iter()
            .map(|b| BoundarySpec {
                width: b.width,
                origin: b.origin,
            })
            .collect();
        Self {
            kinds,
            nodes,
            boundary,
            template: None,
        }
    }
}
