//! Loss terms with analytic gradients.
//!
//! Per-sample term math is written as small `f64` functions returning the
//! value and its partial derivatives; [`evaluate`] assembles a batch,
//! runs both networks once and chains everything back to the parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Fields, PixelCoord, MAP_OUT};
use crate::nn::{softplus, Real};
use crate::scene::ViewSet;
use crate::train::TrainConfig;

/// One pixel of one view, integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pixel {
    pub view: usize,
    pub x: usize,
    pub y: usize,
}

/// A pixel of the source view of flow `flow`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowPixel {
    pub flow: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    /// Reconstruction and alpha samples.
    pub pixels: Vec<Pixel>,
    /// Positional samples; view 0 only.
    pub pos: Vec<Pixel>,
    /// Rigidity bases; the neighbours `+δ` in x and y must be inside.
    pub rigid: Vec<Pixel>,
    pub flow: Vec<FlowPixel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Pos,
    AlphaCe,
    AlphaSparse,
    RecOri,
    RecPro,
    Rigid,
    Flow,
}

impl Term {
    pub const ALL: [Term; 7] = [
        Term::Pos,
        Term::AlphaCe,
        Term::AlphaSparse,
        Term::RecOri,
        Term::RecPro,
        Term::Rigid,
        Term::Flow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Pos => "pos",
            Term::AlphaCe => "alpha_ce",
            Term::AlphaSparse => "alpha_sparse",
            Term::RecOri => "rec_ori",
            Term::RecPro => "rec_pro",
            Term::Rigid => "rigid",
            Term::Flow => "flow",
        }
    }
}

/// Effective weight of every term at one step; `0` disables a term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub pos: f64,
    pub alpha_ce: f64,
    pub alpha_sparse: f64,
    pub rec_ori: f64,
    pub rec_pro: f64,
    pub rigid: f64,
    pub flow: f64,
    /// Rigidity neighbour offset in pixels.
    pub rigid_step: f64,
    pub literal_pos: bool,
}

impl LossWeights {
    /// Weights of `config`'s schedule at `step`, with terms whose inputs
    /// `data` lacks switched off.
    pub fn scheduled(step: usize, config: &TrainConfig, data: &ViewSet) -> Self {
        let alpha_on = step < config.alpha_phase_steps && data.fg_masks().is_some();
        Self {
            pos: if step < config.pos_phase_steps { 1.0 } else { 0.0 },
            alpha_ce: if alpha_on { 1.0 } else { 0.0 },
            alpha_sparse: if alpha_on { config.lambda_sparse } else { 0.0 },
            rec_ori: 1.0,
            rec_pro: if data.inpainted().is_some() { config.lambda_pro } else { 0.0 },
            rigid: config.lambda_rigid,
            flow: if data.flows().is_empty() { 0.0 } else { config.lambda_flow },
            rigid_step: config.rigid_step,
            literal_pos: config.literal_pos_loss,
        }
    }

    /// Every term off except `term`, at unit weight.
    pub fn only(term: Term) -> Self {
        let mut w = Self {
            pos: 0.0,
            alpha_ce: 0.0,
            alpha_sparse: 0.0,
            rec_ori: 0.0,
            rec_pro: 0.0,
            rigid: 0.0,
            flow: 0.0,
            rigid_step: 1.0,
            literal_pos: false,
        };
        *w.weight_mut(term) = 1.0;
        w
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Pos => self.pos,
            Term::AlphaCe => self.alpha_ce,
            Term::AlphaSparse => self.alpha_sparse,
            Term::RecOri => self.rec_ori,
            Term::RecPro => self.rec_pro,
            Term::Rigid => self.rigid,
            Term::Flow => self.flow,
        }
    }

    pub fn weight_mut(&mut self, term: Term) -> &mut f64 {
        match term {
            Term::Pos => &mut self.pos,
            Term::AlphaCe => &mut self.alpha_ce,
            Term::AlphaSparse => &mut self.alpha_sparse,
            Term::RecOri => &mut self.rec_ori,
            Term::RecPro => &mut self.rec_pro,
            Term::Rigid => &mut self.rigid,
            Term::Flow => &mut self.flow,
        }
    }
}

/// Unweighted per-term values of one batch; inactive terms read 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossReport {
    pub step: usize,
    pub pos: f64,
    pub alpha_ce: f64,
    pub alpha_sparse: f64,
    pub rec_ori: f64,
    pub rec_pro: f64,
    pub rigid: f64,
    pub flow: f64,
    pub total: f64,
    /// Names of the terms that contributed.
    pub active: Vec<&'static str>,
}

impl LossReport {
    pub fn value(&self, term: Term) -> f64 {
        match term {
            Term::Pos => self.pos,
            Term::AlphaCe => self.alpha_ce,
            Term::AlphaSparse => self.alpha_sparse,
            Term::RecOri => self.rec_ori,
            Term::RecPro => self.rec_pro,
            Term::Rigid => self.rigid,
            Term::Flow => self.flow,
        }
    }

    fn set(&mut self, term: Term, v: f64) {
        match term {
            Term::Pos => self.pos = v,
            Term::AlphaCe => self.alpha_ce = v,
            Term::AlphaSparse => self.alpha_sparse = v,
            Term::RecOri => self.rec_ori = v,
            Term::RecPro => self.rec_pro = v,
            Term::Rigid => self.rigid = v,
            Term::Flow => self.flow = v,
        }
    }

    pub fn is_active(&self, term: Term) -> bool {
        self.active.contains(&term.name())
    }

    pub const CSV_HEADER: &'static str = "step,pos,alpha_ce,alpha_sparse,rec_ori,rec_pro,rigid,flow,total";

    pub fn csv_row(&self) -> String {
        let mut s = self.step.to_string();
        for v in Term::ALL.map(|t| self.value(t)).iter().chain([self.total].iter()) {
            s.push(',');
            s.push_str(&format!("{v:.8e}"));
        }
        s
    }
}

// ---- per-sample terms ------------------------------------------------------

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Positional term for one view-0 pixel at normalized `(x, y)` given the
/// mapped `[u1, v1, u2, v2]`. Returns the value and its gradient.
pub fn pos_term(x: f64, y: f64, uv: [f64; 4], literal: bool) -> (f64, [f64; 4]) {
    // per-square normalization: û1 = 2u1, û2 = 2u2 - 1 (scale 2 on both)
    let (scale, n) = if literal {
        (1.0, uv)
    } else {
        (2.0, [2.0 * uv[0], 2.0 * uv[1], 2.0 * uv[2] - 1.0, 2.0 * uv[3] - 1.0])
    };
    let target = [x, y, x, y];
    let mut value = 0.0;
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d = n[k] - target[k];
        value += d.abs();
        grad[k] = scale * sign(d);
    }
    (value, grad)
}

/// Binary cross-entropy of `σ(logit)` against `mask`, computed from the
/// logit; returns the value and the derivative with respect to the logit.
pub fn bce_term(logit: f64, mask: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + (-logit).exp());
    (softplus(logit) - mask * logit, s - mask)
}

/// Sparsity penalty `mean_c |(1-α)·c_f|`; returns value, `d/dα`, `d/dc_f`.
pub fn sparse_term(alpha: f64, c_f: [f64; 3]) -> (f64, f64, [f64; 3]) {
    let beta = 1.0 - alpha;
    let mut value = 0.0;
    let mut d_alpha = 0.0;
    let mut d_c = [0.0; 3];
    for k in 0..3 {
        let p = beta * c_f[k];
        let s = sign(p);
        value += p.abs() / 3.0;
        d_alpha -= s * c_f[k] / 3.0;
        d_c[k] = s * beta / 3.0;
    }
    (value, d_alpha, d_c)
}

/// Rigidity of one atlas at one base: `n0`, `nx`, `ny` are the
/// per-square-normalized UVs of `p`, `p+δx̂`, `p+δŷ`. Returns the value and
/// gradients with respect to the three points.
pub fn rigid_term(n0: [f64; 2], nx: [f64; 2], ny: [f64; 2], sigma: f64) -> (f64, [[f64; 2]; 3]) {
    let dx = [nx[0] - n0[0], nx[1] - n0[1]];
    let dy = [ny[0] - n0[0], ny[1] - n0[1]];
    let lx = dx[0].hypot(dx[1]);
    let ly = dy[0].hypot(dy[1]);
    let dot = dx[0] * dy[0] + dx[1] * dy[1];
    let value = (lx - sigma).abs() + (ly - sigma).abs() + dot.abs() / (sigma * sigma);
    let mut g_dx = [0.0; 2];
    let mut g_dy = [0.0; 2];
    let sd = sign(dot) / (sigma * sigma);
    for k in 0..2 {
        if lx > 0.0 {
            g_dx[k] += sign(lx - sigma) * dx[k] / lx;
        }
        if ly > 0.0 {
            g_dy[k] += sign(ly - sigma) * dy[k] / ly;
        }
        g_dx[k] += sd * dy[k];
        g_dy[k] += sd * dx[k];
    }
    let g0 = [-g_dx[0] - g_dy[0], -g_dx[1] - g_dy[1]];
    (value, [g0, g_dx, g_dy])
}

/// Flow consistency between the outputs `src` at `(p, t)` and `dst` at
/// `(p + flow, t')`, both `[u1, v1, u2, v2, α]`.
///
/// The foreground UV distance is weighted by the source alpha and the
/// background distance by its complement, so each layer is only pulled
/// together where it is the visible one; the alpha difference is unweighted.
pub fn flow_term(src: [f64; 5], dst: [f64; 5], conf: f64) -> (f64, [f64; 5], [f64; 5]) {
    let a = src[4];
    let fg = (src[0] - dst[0]).abs() + (src[1] - dst[1]).abs();
    let bg = (src[2] - dst[2]).abs() + (src[3] - dst[3]).abs();
    let da = src[4] - dst[4];
    let value = conf * (a * fg + (1.0 - a) * bg + da.abs());
    let mut gs = [0.0; 5];
    let mut gd = [0.0; 5];
    for k in 0..4 {
        let w = if k < 2 { a } else { 1.0 - a };
        let s = conf * w * sign(src[k] - dst[k]);
        gs[k] = s;
        gd[k] = -s;
    }
    gs[4] = conf * (fg - bg + sign(da));
    gd[4] = -conf * sign(da);
    (value, gs, gd)
}

// ---- batch evaluation ------------------------------------------------------

fn fail<T>(term: Term, what: &str) -> Result<T> {
    Err(Error::Config(format!("{} term needs {what}", term.name())))
}

fn check_inputs(data: &ViewSet, batch: &Batch, w: &LossWeights) -> Result<()> {
    if (w.alpha_ce > 0.0 || w.alpha_sparse > 0.0) && data.fg_masks().is_none() {
        return fail(Term::AlphaCe, "foreground masks (masks/)");
    }
    if w.rec_pro > 0.0 && data.inpainted().is_none() {
        return fail(Term::RecPro, "inpainted background views (inpainted/)");
    }
    if w.flow > 0.0 && data.flows().is_empty() && !batch.flow.is_empty() {
        return fail(Term::Flow, "optical flows (flows/)");
    }
    if let Some(p) = batch.pos.iter().find(|p| p.view != 0) {
        return Err(Error::Precondition(format!(
            "positional samples must come from view 0, got view {}",
            p.view
        )));
    }
    let (wd, ht, n) = (data.width(), data.height(), data.len());
    for p in batch.pixels.iter().chain(&batch.pos).chain(&batch.rigid) {
        if p.view >= n || p.x >= wd || p.y >= ht {
            return Err(Error::Index {
                index: p.view * wd * ht + p.y * wd + p.x,
                len: n * wd * ht,
            });
        }
    }
    if w.rigid > 0.0 {
        if w.rigid_step < 1.0 {
            return Err(Error::Precondition("rigidity offset must be at least one pixel".into()));
        }
        for p in &batch.rigid {
            if p.x as f64 + w.rigid_step > (wd - 1) as f64 || p.y as f64 + w.rigid_step > (ht - 1) as f64 {
                return Err(Error::Precondition(format!(
                    "rigidity base ({}, {}) has an offset neighbour outside the image",
                    p.x, p.y
                )));
            }
        }
    }
    for f in &batch.flow {
        if f.flow >= data.flows().len() || f.x >= wd || f.y >= ht {
            return Err(Error::Precondition(format!("flow sample {f:?} out of range")));
        }
    }
    Ok(())
}

fn finite(term: Term, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("non-finite {} loss", term.name())))
    }
}

/// Row ranges of one mapping evaluation.
struct Rows {
    pixels: usize,
    pos: usize,
    rigid: usize,
    flow: usize,
    n_rigid: usize,
    n_flow: usize,
    total: usize,
}

/// Evaluates the weighted loss of `batch`. When `grads` is given, the
/// gradient of `report.total` is accumulated into it.
pub fn evaluate<T: Real>(
    fields: &Fields<T>,
    data: &ViewSet,
    batch: &Batch,
    w: &LossWeights,
    mut grads: Option<&mut Fields<T>>,
) -> Result<LossReport> {
    check_inputs(data, batch, w)?;
    let (width, height, views) = (data.width(), data.height(), data.len());
    let use_pos = w.pos > 0.0 && !batch.pos.is_empty();
    let use_rigid = w.rigid > 0.0 && !batch.rigid.is_empty();
    // flow samples whose target leaves the image are skipped
    let flow_samples: Vec<(FlowPixel, f64, f64, f64)> = if w.flow > 0.0 {
        batch
            .flow
            .iter()
            .filter_map(|&s| {
                let f = &data.flows()[s.flow];
                let (dx, dy, conf) = f.at(s.x, s.y);
                let (tx, ty) = (s.x as f64 + dx as f64, s.y as f64 + dy as f64);
                let inside = (0.0..=(width - 1) as f64).contains(&tx) && (0.0..=(height - 1) as f64).contains(&ty);
                inside.then_some((s, tx, ty, conf as f64))
            })
            .collect()
    } else {
        Vec::new()
    };
    let n_pix = batch.pixels.len();
    let n_pos = if use_pos { batch.pos.len() } else { 0 };
    let n_rigid = if use_rigid { batch.rigid.len() } else { 0 };
    let n_flow = flow_samples.len();
    let rows = Rows {
        pixels: 0,
        pos: n_pix,
        rigid: n_pix + n_pos,
        flow: n_pix + n_pos + 3 * n_rigid,
        n_rigid,
        n_flow,
        total: n_pix + n_pos + 3 * n_rigid + 2 * n_flow,
    };

    let mut coords: Vec<T> = Vec::with_capacity(rows.total * 3);
    let mut push = |px: f64, py: f64, view: usize| {
        let c = PixelCoord::from_pixel(px, py, view, width, height, views);
        coords.extend([T::c(c.x), T::c(c.y), T::c(c.t)]);
    };
    for p in &batch.pixels {
        push(p.x as f64, p.y as f64, p.view);
    }
    for p in batch.pos.iter().take(n_pos) {
        push(p.x as f64, p.y as f64, 0);
    }
    for offset in [(0.0, 0.0), (w.rigid_step, 0.0), (0.0, w.rigid_step)] {
        for p in batch.rigid.iter().take(n_rigid) {
            push(p.x as f64 + offset.0, p.y as f64 + offset.1, p.view);
        }
    }
    for (s, _, _, _) in &flow_samples {
        push(s.x as f64, s.y as f64, data.flows()[s.flow].from);
    }
    for (s, tx, ty, _) in &flow_samples {
        push(*tx, *ty, data.flows()[s.flow].to);
    }

    let mapped = fields.mapping.forward_batch(coords);
    let out = |r: usize| -> [f64; 5] {
        let o = mapped.row(r);
        [o[0].f64(), o[1].f64(), o[2].f64(), o[3].f64(), o[4].f64()]
    };
    let mut d_map = vec![0.0f64; rows.total * MAP_OUT];
    let mut d_logit = vec![0.0f64; rows.total];
    let mut report = LossReport::default();
    let add = |report: &mut LossReport, term: Term, v: f64| -> Result<()> {
        let v = finite(term, v)?;
        report.set(term, v);
        report.active.push(term.name());
        report.total += w.weight(term) * v;
        Ok(())
    };

    // reconstruction and alpha terms share the atlas evaluation
    let need_atlas = n_pix > 0 && (w.rec_ori > 0.0 || w.rec_pro > 0.0 || w.alpha_sparse > 0.0);
    if n_pix > 0 && w.alpha_ce > 0.0 {
        let masks = data.fg_masks().unwrap();
        let mut value = 0.0;
        for (i, p) in batch.pixels.iter().enumerate() {
            let m = masks[p.view].get(p.x, p.y, 0) as f64;
            let (v, dl) = bce_term(mapped.alpha_logit(rows.pixels + i).f64(), m);
            value += v;
            d_logit[rows.pixels + i] += w.alpha_ce * dl / n_pix as f64;
        }
        add(&mut report, Term::AlphaCe, value / n_pix as f64)?;
    }
    if need_atlas {
        let mut uv: Vec<T> = Vec::with_capacity(4 * n_pix);
        for i in 0..n_pix {
            let o = mapped.row(rows.pixels + i);
            uv.extend([o[0], o[1]]);
        }
        for i in 0..n_pix {
            let o = mapped.row(rows.pixels + i);
            uv.extend([o[2], o[3]]);
        }
        let colored = fields.atlas.forward_batch(&uv)?;
        let rgb = |r: usize| -> [f64; 3] { [0, 1, 2].map(|k| colored.rgb[r * 3 + k].f64()) };
        let mut d_rgb = vec![0.0f64; 2 * n_pix * 3];
        let inv = 1.0 / n_pix as f64;

        if w.rec_ori > 0.0 {
            let mut value = 0.0;
            for (i, p) in batch.pixels.iter().enumerate() {
                let a = out(rows.pixels + i)[4];
                let (cf, cb) = (rgb(i), rgb(n_pix + i));
                let gt = data.views()[p.view].pixel(p.x, p.y);
                let mut d_a = 0.0;
                for k in 0..3 {
                    let e = a * cf[k] + (1.0 - a) * cb[k] - gt[k] as f64;
                    value += e * e;
                    let dc = w.rec_ori * 2.0 * e * inv / 3.0;
                    d_rgb[i * 3 + k] += a * dc;
                    d_rgb[(n_pix + i) * 3 + k] += (1.0 - a) * dc;
                    d_a += dc * (cf[k] - cb[k]);
                }
                d_map[(rows.pixels + i) * MAP_OUT + 4] += d_a;
            }
            add(&mut report, Term::RecOri, value * inv / 3.0)?;
        }
        if w.rec_pro > 0.0 {
            let inpainted = data.inpainted().unwrap();
            let selected: Vec<usize> = (0..n_pix)
                .filter(|&i| {
                    let p = batch.pixels[i];
                    data.mask_at(p.view, p.x, p.y).unwrap_or(true)
                })
                .collect();
            let mut value = 0.0;
            if !selected.is_empty() {
                let inv_m = 1.0 / selected.len() as f64;
                for &i in &selected {
                    let p = batch.pixels[i];
                    let cb = rgb(n_pix + i);
                    let target = inpainted[p.view].pixel(p.x, p.y);
                    for k in 0..3 {
                        let e = cb[k] - target[k] as f64;
                        value += e * e;
                        d_rgb[(n_pix + i) * 3 + k] += w.rec_pro * 2.0 * e * inv_m / 3.0;
                    }
                }
                value *= inv_m / 3.0;
            }
            add(&mut report, Term::RecPro, value)?;
        }
        if w.alpha_sparse > 0.0 {
            let mut value = 0.0;
            for i in 0..n_pix {
                let (v, d_a, d_c) = sparse_term(out(rows.pixels + i)[4], rgb(i));
                value += v;
                d_map[(rows.pixels + i) * MAP_OUT + 4] += w.alpha_sparse * d_a * inv;
                for k in 0..3 {
                    d_rgb[i * 3 + k] += w.alpha_sparse * d_c[k] * inv;
                }
            }
            add(&mut report, Term::AlphaSparse, value * inv)?;
        }
        if let Some(g) = grads.as_deref_mut() {
            let d_rgb_t: Vec<T> = d_rgb.iter().map(|&v| T::c(v)).collect();
            let d_uv = fields
                .atlas
                .backward_batch(&colored, &d_rgb_t, &mut g.atlas, true)
                .unwrap();
            for i in 0..n_pix {
                let r = (rows.pixels + i) * MAP_OUT;
                d_map[r] += d_uv[i * 2].f64();
                d_map[r + 1] += d_uv[i * 2 + 1].f64();
                d_map[r + 2] += d_uv[(n_pix + i) * 2].f64();
                d_map[r + 3] += d_uv[(n_pix + i) * 2 + 1].f64();
            }
        }
    }

    if use_pos {
        let inv = 1.0 / n_pos as f64;
        let mut value = 0.0;
        for (i, p) in batch.pos.iter().take(n_pos).enumerate() {
            let c = PixelCoord::from_pixel(p.x as f64, p.y as f64, 0, width, height, views);
            let o = out(rows.pos + i);
            let (v, g) = pos_term(c.x, c.y, [o[0], o[1], o[2], o[3]], w.literal_pos);
            value += v;
            for k in 0..4 {
                d_map[(rows.pos + i) * MAP_OUT + k] += w.pos * g[k] * inv;
            }
        }
        add(&mut report, Term::Pos, value * inv)?;
    }

    if use_rigid {
        let sigma = w.rigid_step / ((width.max(height).max(2) - 1) as f64);
        let inv = 1.0 / n_rigid as f64;
        let mut value = 0.0;
        for i in 0..n_rigid {
            let r = [
                rows.rigid + i,
                rows.rigid + rows.n_rigid + i,
                rows.rigid + 2 * rows.n_rigid + i,
            ];
            let o = r.map(out);
            // (component offset, normalization shift) per atlas
            for (k0, shift) in [(0usize, 0.0), (2usize, 1.0)] {
                let n = o.map(|o| [2.0 * o[k0] - shift, 2.0 * o[k0 + 1] - shift]);
                let (v, g) = rigid_term(n[0], n[1], n[2], sigma);
                value += v;
                for j in 0..3 {
                    for c in 0..2 {
                        d_map[r[j] * MAP_OUT + k0 + c] += w.rigid * 2.0 * g[j][c] * inv;
                    }
                }
            }
        }
        add(&mut report, Term::Rigid, value * inv)?;
    }

    if w.flow > 0.0 && !batch.flow.is_empty() {
        let mut value = 0.0;
        if n_flow > 0 {
            let inv = 1.0 / n_flow as f64;
            for (i, (_, _, _, conf)) in flow_samples.iter().enumerate() {
                let (rs, rd) = (rows.flow + i, rows.flow + rows.n_flow + i);
                let (v, gs, gd) = flow_term(out(rs), out(rd), *conf);
                value += v;
                for k in 0..5 {
                    d_map[rs * MAP_OUT + k] += w.flow * gs[k] * inv;
                    d_map[rd * MAP_OUT + k] += w.flow * gd[k] * inv;
                }
            }
            value *= inv;
        }
        add(&mut report, Term::Flow, value)?;
    }

    if let Some(g) = grads {
        let d_map: Vec<T> = d_map.iter().map(|&v| T::c(v)).collect();
        let d_logit: Vec<T> = d_logit.iter().map(|&v| T::c(v)).collect();
        fields
            .mapping
            .backward_batch(&mapped, &d_map, Some(&d_logit), &mut g.mapping);
    }
    finite(Term::RecOri, report.total)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AtlasConfig, MappingConfig};
    use crate::hashgrid::HashGridConfig;
    use crate::scene::{synth_scene, SynthSpec};
    use crate::train::gradient_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_fields(seed: u64) -> Fields<f64> {
        let atlas = AtlasConfig {
            grid: HashGridConfig {
                levels: 2,
                base_resolution: 4,
                per_level_scale: 2.0,
                table_size: 64,
                feature_dim: 2,
            },
            hidden_layers: 1,
            width: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Fields::init(MappingConfig { layers: 3, width: 16 }, atlas, &mut rng).unwrap();
        // move away from the near-constant initial state
        for (_, _, t) in f.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        f
    }

    fn scene() -> ViewSet {
        synth_scene(&SynthSpec::drifting(20, 16, 3, 4.0, (1.0, 1.0))).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, data: &ViewSet) -> Batch {
        let config = TrainConfig {
            batch_size: 24,
            aux_batch_size: 8,
            ..TrainConfig::default()
        };
        let w = LossWeights::scheduled(0, &config, data);
        crate::train::sample_batch(rng, data, &config, &w)
    }

    #[test]
    fn pos_examples() {
        assert_eq!(pos_term(0.25, 0.5, [0.125, 0.25, 0.625, 0.75], false).0, 0.0);
        // normalized values 0.25, 0.4, 0.55, 0.5
        let (v, _) = pos_term(0.3, 0.4, [0.125, 0.2, 0.775, 0.75], false);
        assert!((v - 0.40).abs() < 1e-12);
        let (lit, _) = pos_term(0.3, 0.4, [0.3, 0.4, 0.3, 0.4], true);
        assert_eq!(lit, 0.0);
    }

    #[test]
    fn alpha_examples() {
        let (v, d) = bce_term(0.0, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((d + 0.5).abs() < 1e-12);
        assert!(bce_term(60.0, 1.0).0 < 1e-20);
        assert_eq!(sparse_term(1.0, [0.3, 0.7, 0.9]).0, 0.0);
        assert_eq!(sparse_term(0.5, [0.0; 3]).0, 0.0);
    }

    #[test]
    fn rigid_examples() {
        let s = 0.1;
        // translated identity: offsets of exactly sigma along the axes
        let (v, _) = rigid_term([0.3, 0.2], [0.4, 0.2], [0.3, 0.3], s);
        assert!(v.abs() < 1e-12);
        let (v, _) = rigid_term([0.3, 0.2], [0.3, 0.2], [0.3, 0.2], s);
        assert!((v - 2.0 * s).abs() < 1e-12);
    }

    #[test]
    fn flow_examples() {
        let o = [0.2, 0.3, 0.6, 0.7, 0.4];
        assert_eq!(flow_term(o, o, 1.0).0, 0.0);
        let mut q = o;
        q[0] += 0.1;
        q[2] += 0.2;
        let (v, _, _) = flow_term(o, q, 0.5);
        assert!((v - 0.5 * (0.4 * 0.1 + 0.6 * 0.2)).abs() < 1e-12);
        assert_eq!(flow_term(o, q, 0.0).0, 0.0);
    }

    #[test]
    fn rec_example_per_channel_mse() {
        // one pixel predicting (0.5, 0.5, 0.5) against (0.6, 0.5, 0.5)
        let e: f64 = [0.1f64, 0.0, 0.0].iter().map(|d| d * d).sum::<f64>() / 3.0;
        assert!((e - 0.01 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_boundaries() {
        let data = scene();
        let c = TrainConfig::default();
        let w0 = LossWeights::scheduled(0, &c, &data);
        assert!(Term::ALL.iter().all(|&t| w0.weight(t) > 0.0));
        assert!(LossWeights::scheduled(999, &c, &data).pos > 0.0);
        assert_eq!(LossWeights::scheduled(1000, &c, &data).pos, 0.0);
        let late = LossWeights::scheduled(50_000, &c, &data);
        assert_eq!((late.pos, late.alpha_ce, late.alpha_sparse), (0.0, 0.0, 0.0));
        assert!(late.rec_ori > 0.0 && late.flow > 0.0);
    }

    #[test]
    fn missing_assets_are_named() {
        let full = scene();
        let bare = ViewSet::new(full.views().to_vec(), None, None, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = batch(&mut rng, &full);
        let f = tiny_fields(1);
        let e = evaluate(&f, &bare, &b, &LossWeights::only(Term::AlphaCe), None).unwrap_err();
        assert!(matches!(e, Error::Config(_)) && e.to_string().contains("mask"));
        let e = evaluate(&f, &bare, &b, &LossWeights::only(Term::RecPro), None).unwrap_err();
        assert!(e.to_string().contains("inpainted"));
        // the schedule switches them off instead
        let c = TrainConfig::default();
        let w = LossWeights::scheduled(0, &c, &bare);
        let bb = Batch { flow: vec![], ..b };
        let r = evaluate(&f, &bare, &bb, &w, None).unwrap();
        assert!(!r.is_active(Term::AlphaCe) && !r.is_active(Term::RecPro) && !r.is_active(Term::Flow));
    }

    #[test]
    fn pos_samples_outside_view_zero_are_rejected() {
        let data = scene();
        let b = Batch {
            pos: vec![Pixel { view: 1, x: 0, y: 0 }],
            ..Batch::default()
        };
        let e = evaluate(&tiny_fields(0), &data, &b, &LossWeights::only(Term::Pos), None).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }

    #[test]
    fn total_is_weighted_sum_of_active_terms() {
        let data = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = batch(&mut rng, &data);
        let f = tiny_fields(2);
        let c = TrainConfig::default();
        let w = LossWeights::scheduled(0, &c, &data);
        let r = evaluate(&f, &data, &b, &w, None).unwrap();
        let sum: f64 = Term::ALL.iter().map(|&t| w.weight(t) * r.value(t)).sum();
        assert!((r.total - sum).abs() < 1e-12 * sum.max(1.0));
        for t in Term::ALL {
            assert!(r.value(t) >= 0.0);
            let single = evaluate(&f, &data, &b, &LossWeights::only(t), None).unwrap();
            assert!((single.value(t) - r.value(t)).abs() < 1e-12, "{}", t.name());
        }
    }

    #[test]
    fn gradients_match_finite_differences_per_term() {
        let data = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = batch(&mut rng, &data);
        let f = tiny_fields(4);
        for t in Term::ALL {
            let probes = gradient_check(&f, &data, &b, &LossWeights::only(t), 12, 1e-6, &mut rng).unwrap().probes;
            for p in probes {
                assert!(p.relative_error(1e-7) < 1e-4, "{} {p:?}", t.name());
            }
        }
    }

    #[test]
    fn inactive_terms_have_exactly_zero_gradient() {
        let data = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = batch(&mut rng, &data);
        let f = tiny_fields(6);
        let c = TrainConfig {
            pos_phase_steps: 10,
            alpha_phase_steps: 20,
            total_steps: 30,
            ..TrainConfig::default()
        };
        let mut late = LossWeights::scheduled(20, &c, &data);
        let mut g_late = f.zeros_like();
        evaluate(&f, &data, &b, &late, Some(&mut g_late)).unwrap();
        // same weights with the phased terms explicitly zeroed and no samples
        late.pos = 0.0;
        let stripped = Batch { pos: vec![], ..b.clone() };
        let mut g_ref = f.zeros_like();
        evaluate(&f, &data, &stripped, &late, Some(&mut g_ref)).unwrap();
        assert_eq!(g_late, g_ref);
    }
}
