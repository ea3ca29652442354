//! Static layer-graph descriptions of the supported networks.
//!
//! An [`ArchSpec`] is an inference skeleton: convolutions (implicitly followed by
//! ReLU), linear layers, non-overlapping average pools and residual adds, listed
//! in topological order between a single `input` and a single `output` node.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const KNOWN_ARCHS: &[&str] = &["resnet20", "resnet56", "resnet110", "vgg16", "tinyconvnet"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Conv,
    Linear,
    Pool,
    Add,
    Output,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv => "conv",
            LayerKind::Linear => "linear",
            LayerKind::Pool => "pool",
            LayerKind::Add => "add",
            LayerKind::Output => "output",
        }
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "input" => LayerKind::Input,
            "conv" => LayerKind::Conv,
            "linear" => LayerKind::Linear,
            "pool" => LayerKind::Pool,
            "add" => LayerKind::Add,
            "output" => LayerKind::Output,
            other => return Err(format!("unknown layer kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub predecessors: Vec<String>,
}

impl LayerSpec {
    fn node(id: &str, kind: LayerKind, channels: usize, spatial: usize, preds: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            out_h: spatial,
            out_w: spatial,
            predecessors: preds.iter().map(|p| p.to_string()).collect(),
        }
    }

    /// Number of weights the layer carries (conv: n·m·s², linear: out·in + out).
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.out_channels * self.in_channels * self.kernel * self.kernel,
            LayerKind::Linear => self.out_channels * self.in_channels + self.out_channels,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub prunable: Vec<String>,
}

/// Incremental graph construction that tracks the current tip's shape.
struct Builder {
    layers: Vec<LayerSpec>,
    prunable: Vec<String>,
}

impl Builder {
    fn new(channels: usize, spatial: usize) -> Self {
        Self {
            layers: vec![LayerSpec::node("input", LayerKind::Input, channels, spatial, &[])],
            prunable: Vec::new(),
        }
    }

    fn get(&self, id: &str) -> &LayerSpec {
        self.layers.iter().find(|l| l.id == id).expect("known layer")
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, id: &str, pred: &str, n: usize, s: usize, stride: usize, padding: usize, prunable: bool) {
        let p = self.get(pred);
        let (m, h) = (p.out_channels, p.out_h);
        let out = (h + 2 * padding - s) / stride + 1;
        self.layers.push(LayerSpec {
            id: id.to_string(),
            kind: LayerKind::Conv,
            in_channels: m,
            out_channels: n,
            kernel: s,
            stride,
            padding,
            out_h: out,
            out_w: out,
            predecessors: vec![pred.to_string()],
        });
        if prunable {
            self.prunable.push(id.to_string());
        }
    }

    fn pool(&mut self, id: &str, pred: &str, kernel: usize) {
        let p = self.get(pred);
        let c = p.out_channels;
        let out = p.out_h / kernel;
        let mut l = LayerSpec::node(id, LayerKind::Pool, c, out, &[pred]);
        l.kernel = kernel;
        l.stride = kernel;
        self.layers.push(l);
    }

    fn add(&mut self, id: &str, a: &str, b: &str) {
        let p = self.get(a);
        let l = LayerSpec::node(id, LayerKind::Add, p.out_channels, p.out_h, &[a, b]);
        self.layers.push(l);
    }

    fn linear(&mut self, id: &str, pred: &str, out: usize) {
        let p = self.get(pred);
        let mut l = LayerSpec::node(id, LayerKind::Linear, out, 1, &[pred]);
        l.in_channels = p.out_channels * p.out_h * p.out_w;
        self.layers.push(l);
    }

    fn finish(mut self, name: &str, pred: &str) -> ArchSpec {
        let c = self.get(pred).out_channels;
        self.layers
            .push(LayerSpec::node("output", LayerKind::Output, c, 1, &[pred]));
        let arch = ArchSpec {
            name: name.to_string(),
            layers: self.layers,
            prunable: self.prunable,
        };
        debug_assert!(arch.validate().is_ok(), "{:?}", arch.validate());
        arch
    }
}

/// Builds one of [`KNOWN_ARCHS`] with 10 output classes.
pub fn build_arch(name: &str) -> Result<ArchSpec> {
    match name {
        "resnet20" => Ok(resnet(20, 10)),
        "resnet56" => Ok(resnet(56, 10)),
        "resnet110" => Ok(resnet(110, 10)),
        "vgg16" => Ok(vgg16(10)),
        "tinyconvnet" => Ok(tinyconvnet(10)),
        _ => Err(Error::UnknownArch {
            name: name.to_string(),
            known: KNOWN_ARCHS.join(", "),
        }),
    }
}

/// CIFAR ResNet-`depth`: a 3×3 stem, then three stages of (depth−2)/6 basic
/// blocks at widths 16/32/64. Stage transitions use a stride-2 first conv and a
/// 1×1 projection shortcut; projections are not prunable.
pub fn resnet(depth: usize, classes: usize) -> ArchSpec {
    assert!(depth >= 8 && (depth - 2) % 6 == 0, "CIFAR ResNet depth must be 6k+2");
    let blocks = (depth - 2) / 6;
    let mut b = Builder::new(3, 32);
    b.conv("conv1", "input", 16, 3, 1, 1, true);
    let mut tip = "conv1".to_string();
    for (stage, width) in [16usize, 32, 64].into_iter().enumerate() {
        for block in 0..blocks {
            let prefix = format!("layer{}.{}", stage + 1, block);
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let c1 = format!("{prefix}.conv1");
            let c2 = format!("{prefix}.conv2");
            b.conv(&c1, &tip, width, 3, stride, 1, true);
            b.conv(&c2, &c1, width, 3, 1, 1, true);
            let shortcut = if stride != 1 || b.get(&tip).out_channels != width {
                let d = format!("{prefix}.downsample");
                b.conv(&d, &tip, width, 1, stride, 0, false);
                d
            } else {
                tip.clone()
            };
            let add = format!("{prefix}.add");
            b.add(&add, &c2, &shortcut);
            tip = add;
        }
    }
    let spatial = b.get(&tip).out_h;
    b.pool("avgpool", &tip, spatial);
    b.linear("fc", "avgpool", classes);
    b.finish(&format!("resnet{depth}"), "fc")
}

/// CIFAR VGG-16: 13 3×3 convs in five pooled stages and a 512→512→classes head.
pub fn vgg16(classes: usize) -> ArchSpec {
    const CFG: &[&[usize]] = &[&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
    let mut b = Builder::new(3, 32);
    let mut tip = "input".to_string();
    let mut idx = 0;
    for (stage, widths) in CFG.iter().enumerate() {
        for &w in widths.iter() {
            idx += 1;
            let id = format!("conv{idx}");
            b.conv(&id, &tip, w, 3, 1, 1, true);
            tip = id;
        }
        let id = format!("pool{}", stage + 1);
        b.pool(&id, &tip, 2);
        tip = id;
    }
    b.linear("fc1", &tip, 512);
    b.linear("fc2", "fc1", classes);
    b.finish("vgg16", "fc2")
}

/// Three-conv network on 3×8×8 inputs used for training runs.
pub fn tinyconvnet(classes: usize) -> ArchSpec {
    let mut b = Builder::new(3, 8);
    b.conv("conv1", "input", 16, 3, 1, 1, true);
    b.conv("conv2", "conv1", 16, 3, 1, 1, true);
    b.pool("pool1", "conv2", 2);
    b.conv("conv3", "pool1", 32, 3, 1, 1, true);
    b.pool("gap", "conv3", 4);
    b.linear("fc", "gap", classes);
    b.finish("tinyconvnet", "fc")
}

impl ArchSpec {
    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn layer_mut(&mut self, id: &str) -> Option<&mut LayerSpec> {
        self.layers.iter_mut().find(|l| l.id == id)
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Conv)
    }

    pub fn is_prunable(&self, id: &str) -> bool {
        self.prunable.iter().any(|p| p == id)
    }

    /// Layers that list `id` as a predecessor.
    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LayerSpec> + 'a {
        self.layers
            .iter()
            .filter(move |l| l.predecessors.iter().any(|p| p == id))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Checks graph well-formedness and per-layer shape consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArch(msg));
        let mut seen: HashMap<&str, &LayerSpec> = HashMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            if seen.contains_key(l.id.as_str()) {
                return bad(format!("duplicate layer id `{}`", l.id));
            }
            let is_first = i == 0;
            let is_last = i + 1 == self.layers.len();
            match (l.kind, is_first, is_last) {
                (LayerKind::Input, true, _) | (LayerKind::Output, _, true) => {}
                (LayerKind::Input, ..) => return bad(format!("input `{}` must be the first layer", l.id)),
                (LayerKind::Output, ..) => return bad(format!("output `{}` must be the last layer", l.id)),
                (_, true, _) => return bad("first layer must be the input".into()),
                (_, _, true) => return bad("last layer must be the output".into()),
                _ => {}
            }
            // Predecessors must appear earlier, which also rules out cycles.
            let preds: Vec<&LayerSpec> = l
                .predecessors
                .iter()
                .map(|p| {
                    seen.get(p.as_str()).copied().ok_or_else(|| {
                        Error::InvalidArch(format!("layer `{}` has unknown or later predecessor `{p}`", l.id))
                    })
                })
                .collect::<Result<_>>()?;
            let expected_preds = match l.kind {
                LayerKind::Input => 0,
                LayerKind::Add => 2,
                _ => 1,
            };
            if preds.len() != expected_preds {
                return bad(format!(
                    "layer `{}` needs {expected_preds} predecessors, has {}",
                    l.id,
                    preds.len()
                ));
            }
            match l.kind {
                LayerKind::Conv => {
                    let p = preds[0];
                    if l.kernel == 0 || l.stride == 0 || p.out_h + 2 * l.padding < l.kernel {
                        return bad(format!("conv `{}` has an invalid kernel geometry", l.id));
                    }
                    let oh = (p.out_h + 2 * l.padding - l.kernel) / l.stride + 1;
                    let ow = (p.out_w + 2 * l.padding - l.kernel) / l.stride + 1;
                    if l.in_channels != p.out_channels || (oh, ow) != (l.out_h, l.out_w) {
                        return bad(format!(
                            "conv `{}` expects {}×{}×{} from `{}`, which yields {}×{}×{}",
                            l.id, l.in_channels, oh, ow, p.id, p.out_channels, p.out_h, p.out_w
                        ));
                    }
                }
                LayerKind::Pool => {
                    let p = preds[0];
                    if l.kernel == 0
                        || l.in_channels != p.out_channels
                        || l.out_channels != p.out_channels
                        || (l.out_h, l.out_w) != (p.out_h / l.kernel, p.out_w / l.kernel)
                        || l.out_h == 0
                    {
                        return bad(format!("pool `{}` is inconsistent with `{}`", l.id, p.id));
                    }
                }
                LayerKind::Add => {
                    let (a, b) = (preds[0], preds[1]);
                    if a.out_channels != b.out_channels
                        || (a.out_h, a.out_w) != (b.out_h, b.out_w)
                        || l.out_channels != a.out_channels
                        || (l.out_h, l.out_w) != (a.out_h, a.out_w)
                    {
                        return bad(format!("add `{}` joins mismatched `{}` and `{}`", l.id, a.id, b.id));
                    }
                }
                LayerKind::Linear => {
                    let p = preds[0];
                    if l.in_channels != p.out_channels * p.out_h * p.out_w {
                        return bad(format!("linear `{}` input width does not match `{}`", l.id, p.id));
                    }
                }
                LayerKind::Input | LayerKind::Output => {}
            }
            if l.out_channels == 0 || l.in_channels == 0 {
                return bad(format!("layer `{}` has zero channels", l.id));
            }
            seen.insert(&l.id, l);
        }
        for p in &self.prunable {
            match seen.get(p.as_str()) {
                Some(l) if l.kind == LayerKind::Conv => {}
                _ => return bad(format!("prunable `{p}` is not a conv layer")),
            }
        }
        Ok(())
    }

    /// Serializes to the line-oriented text format read by [`ArchSpec::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "arch {}", self.name).unwrap();
        writeln!(s, "prunable {}", self.prunable.join(",")).unwrap();
        for l in &self.layers {
            writeln!(
                s,
                "layer {} kind={} m={} n={} s={} stride={} padding={} spatial={}x{} preds={}",
                l.id,
                l.kind.as_str(),
                l.in_channels,
                l.out_channels,
                l.kernel,
                l.stride,
                l.padding,
                l.out_h,
                l.out_w,
                l.predecessors.join(",")
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = None;
        let mut prunable = Vec::new();
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            match head {
                "arch" => name = Some(rest.trim().to_string()),
                "prunable" => prunable = split_list(rest.trim()),
                "layer" => layers.push(parse_layer(rest).map_err(err)?),
                other => return Err(err(format!("unexpected record `{other}`"))),
            }
        }
        let arch = ArchSpec {
            name: name.ok_or_else(|| Error::Parse {
                line: 1,
                msg: "missing `arch` record".into(),
            })?,
            layers,
            prunable,
        };
        arch.validate()?;
        Ok(arch)
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect()
}

fn parse_layer(rest: &str) -> std::result::Result<LayerSpec, String> {
    let mut parts = rest.split_whitespace();
    let id = parts.next().ok_or("layer record without id")?.to_string();
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("malformed field `{p}`"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
    let num = |k: &str| -> std::result::Result<usize, String> {
        get(k)?.parse().map_err(|_| format!("`{k}` is not a non-negative integer"))
    };
    let (h, w) = get("spatial")?
        .split_once('x')
        .ok_or("spatial must be HxW")?;
    Ok(LayerSpec {
        id,
        kind: get("kind")?.parse()?,
        in_channels: num("m")?,
        out_channels: num("n")?,
        kernel: num("s")?,
        stride: num("stride")?,
        padding: num("padding")?,
        out_h: h.parse().map_err(|_| "bad spatial height")?,
        out_w: w.parse().map_err(|_| "bad spatial width")?,
        predecessors: split_list(fields.get("preds").copied().unwrap_or("")),
    })
}
