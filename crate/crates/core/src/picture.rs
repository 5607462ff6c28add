//! The ethicality situational picture: one bubble per card positioned by
//! perceived relevance (x) and valuation consensus (y), colored by coverage
//! and sized by priority drift.
//!
//! [`ChartModel`] is the canonical JSON output; [`render_svg`] draws the same
//! model as an SVG 1.1 document with byte-stable output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::metrics::{
    self, AxisAnchors, BubbleColor, HarmonyReport, PriorityTable, SizeCode,
};
use crate::model::{
    CardId, CoverageAssessment, Deck, PrioritizationRound, StakeholderId, Theme, Timestamp,
    Trigger,
};

pub const CHART_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PictureKind {
    TargetState,
    Outcome,
}

/// How priority drift is shown: bubble size, or a gray ghost at the
/// baseline position joined to the current bubble by a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    SizeCoding,
    Connector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ghost {
    pub x0: Fraction,
    pub y0: Fraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bubble {
    pub card_id: CardId,
    pub label: String,
    pub name: String,
    pub theme: Theme,
    pub x: Fraction,
    pub y: Fraction,
    pub color: BubbleColor,
    pub size: SizeCode,
    pub ghost: Option<Ghost>,
    pub total_tokens: i64,
    pub median_tokens: Fraction,
    pub deviation_count: u32,
    pub coverage_average: Option<Fraction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMetadata {
    /// Anchors in total tokens.
    pub relevance: AxisAnchors,
    /// Anchors in deviation counts.
    pub consensus: AxisAnchors,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SituationalPicture {
    pub picture_id: String,
    pub kind: PictureKind,
    pub mode: RenderMode,
    pub round_ref: u32,
    pub assessment_ref: Option<u32>,
    pub bubbles: Vec<Bubble>,
    pub axis_metadata: AxisMetadata,
    pub created_at: Timestamp,
}

impl SituationalPicture {
    pub fn bubble(&self, card: CardId) -> Option<&Bubble> {
        self.bubbles.iter().find(|b| b.card_id == card)
    }
}

struct Layout {
    priorities: PriorityTable,
    harmony: HarmonyReport,
    axes: AxisMetadata,
    coords: BTreeMap<CardId, (Fraction, Fraction)>,
}

fn layout(round: &PrioritizationRound, deck: &Deck) -> Result<Layout> {
    let priorities = metrics::card_priorities(round, deck)?;
    let harmony = metrics::harmony_report(round, deck)?;
    let relevance = metrics::relevance_anchors(&priorities).ok_or(Error::EmptyDeck)?;
    let consensus = metrics::consensus_anchors(&harmony).ok_or(Error::EmptyDeck)?;
    let coords = deck
        .card_ids()
        .map(|card| {
            Ok((
                card,
                (
                    metrics::relevance_coordinate(card, &priorities)?,
                    metrics::consensus_coordinate(card, &harmony)?,
                ),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(Layout {
        priorities,
        harmony,
        axes: AxisMetadata {
            relevance,
            consensus,
        },
        coords,
    })
}

fn base_bubbles(deck: &Deck, layout: &Layout) -> Vec<Bubble> {
    deck.cards
        .iter()
        .map(|card| {
            let (x, y) = layout.coords[&card.card_id];
            let harmony = layout.harmony.cards[&card.card_id];
            Bubble {
                card_id: card.card_id,
                label: card.card_id.to_string(),
                name: card.name.clone(),
                theme: card.theme,
                x,
                y,
                color: BubbleColor::Gray,
                size: SizeCode::Medium,
                ghost: None,
                total_tokens: layout.priorities.totals[&card.card_id],
                median_tokens: harmony.median_tokens,
                deviation_count: harmony.deviation_count,
                coverage_average: None,
            }
        })
        .collect()
}

/// Target state from the closed baseline round: gray, medium bubbles.
pub fn build_target_state(
    round0: &PrioritizationRound,
    deck: &Deck,
    created_at: Timestamp,
) -> Result<SituationalPicture> {
    let layout = layout(round0, deck)?;
    Ok(SituationalPicture {
        picture_id: format!("target-r{}", round0.round_index),
        kind: PictureKind::TargetState,
        mode: RenderMode::SizeCoding,
        round_ref: round0.round_index,
        assessment_ref: None,
        bubbles: base_bubbles(deck, &layout),
        axis_metadata: layout.axes,
        created_at,
    })
}

/// Outcome picture: positions from the latest round, color from coverage,
/// size from the change against the baseline totals.
#[allow(clippy::too_many_arguments)]
pub fn build_outcome_picture<'a>(
    deck: &Deck,
    required: impl IntoIterator<Item = &'a StakeholderId>,
    latest_round: &PrioritizationRound,
    assessment: &CoverageAssessment,
    baseline: Option<&SituationalPicture>,
    mode: RenderMode,
    created_at: Timestamp,
) -> Result<SituationalPicture> {
    let baseline = baseline.ok_or(Error::NoBaseline)?;
    let missing = assessment.missing(required, deck);
    if !missing.is_empty() {
        return Err(Error::IncompleteAssessment { missing });
    }
    let layout = layout(latest_round, deck)?;
    let mut bubbles = base_bubbles(deck, &layout);
    for bubble in &mut bubbles {
        let avg = metrics::coverage_average(bubble.card_id, assessment)?;
        bubble.color = metrics::color_of(avg)?;
        bubble.coverage_average = Some(avg);
        let base = baseline
            .bubble(bubble.card_id)
            .ok_or(Error::UnknownCard(bubble.card_id))?;
        bubble.size = metrics::size_of(base.total_tokens, bubble.total_tokens);
    }
    let picture = SituationalPicture {
        picture_id: format!(
            "outcome-a{}-r{}",
            assessment.assessment_index, latest_round.round_index
        ),
        kind: PictureKind::Outcome,
        mode: RenderMode::SizeCoding,
        round_ref: latest_round.round_index,
        assessment_ref: Some(assessment.assessment_index),
        bubbles,
        axis_metadata: layout.axes,
        created_at,
    };
    Ok(match mode {
        RenderMode::SizeCoding => picture,
        RenderMode::Connector => with_connectors(&picture, baseline),
    })
}

/// Switches an outcome picture to connector mode, attaching each card's
/// baseline position as its ghost.
pub fn with_connectors(picture: &SituationalPicture, baseline: &SituationalPicture) -> SituationalPicture {
    let mut out = picture.clone();
    out.mode = RenderMode::Connector;
    for bubble in &mut out.bubbles {
        bubble.ghost = baseline.bubble(bubble.card_id).map(|b| Ghost { x0: b.x, y0: b.y });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub card_id: CardId,
    pub label: String,
    pub name: String,
    pub baseline_total: i64,
    pub current_total: i64,
    pub total_delta: i64,
    pub size_code: SizeCode,
    pub shift_x: Fraction,
    pub shift_y: Fraction,
    /// Trigger descriptions and stakeholder rationales behind the change.
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerSummary {
    pub trigger_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline_round: u32,
    pub current_round: u32,
    pub triggers: Vec<TriggerSummary>,
    pub rows: Vec<DeltaRow>,
}

/// Compares the latest closed round against the target state.
///
/// `rounds` is the session's round list; round 0 is the baseline.
pub fn delta_report(
    deck: &Deck,
    baseline: &SituationalPicture,
    rounds: &[PrioritizationRound],
    triggers: &[Trigger],
) -> Result<DeltaReport> {
    let baseline_round = rounds
        .iter()
        .find(|r| r.round_index == baseline.round_ref)
        .ok_or(Error::UnknownRound(baseline.round_ref))?;
    let latest = rounds
        .iter()
        .rev()
        .find(|r| r.is_closed())
        .ok_or(Error::NoBaseline)?;
    let layout = layout(latest, deck)?;

    let cited: Vec<TriggerSummary> = rounds
        .iter()
        .filter(|r| r.round_index > baseline_round.round_index && r.round_index <= latest.round_index)
        .filter_map(|r| r.trigger_ref.as_ref())
        .filter_map(|id| triggers.iter().find(|t| &t.trigger_id == id))
        .map(|t| TriggerSummary {
            trigger_id: t.trigger_id.to_string(),
            description: t.description.clone(),
        })
        .collect();

    let mut rows = Vec::with_capacity(deck.len());
    for card in &deck.cards {
        let id = card.card_id;
        let base = baseline.bubble(id).ok_or(Error::UnknownCard(id))?;
        let current_total = layout.priorities.totals[&id];
        let (x, y) = layout.coords[&id];
        let total_delta = current_total - base.total_tokens;
        let mut reasons = Vec::new();
        if total_delta != 0 {
            reasons.extend(
                cited
                    .iter()
                    .map(|t| format!("trigger {}: {}", t.trigger_id, t.description)),
            );
            for (sid, alloc) in &latest.allocations {
                let before = baseline_round
                    .allocations
                    .get(sid)
                    .map_or(0, |a| a.tokens_on(id));
                let change = alloc.tokens_on(id) - before;
                if change != 0 {
                    let mut line = format!("{sid} ({change:+})");
                    if let Some(r) = &alloc.rationale {
                        let _ = write!(line, ": {r}");
                    }
                    reasons.push(line);
                }
            }
        }
        rows.push(DeltaRow {
            card_id: id,
            label: id.to_string(),
            name: card.name.clone(),
            baseline_total: base.total_tokens,
            current_total,
            total_delta,
            size_code: metrics::size_of(base.total_tokens, current_total),
            shift_x: x - base.x,
            shift_y: y - base.y,
            reasons,
        });
    }
    Ok(DeltaReport {
        baseline_round: baseline_round.round_index,
        current_round: latest.round_index,
        triggers: cited,
        rows,
    })
}

/// JSON chart model shared by the SVG renderer and browser clients.
///
/// Exact coordinates travel as `"n/d"` strings; the `*_approx` fields are
/// convenience floats and are ignored when converting back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartModel {
    pub schema_version: u32,
    pub picture_id: String,
    pub kind: PictureKind,
    pub mode: RenderMode,
    pub round_ref: u32,
    pub assessment_ref: Option<u32>,
    pub created_at: Timestamp,
    pub axes: AxisMetadata,
    pub bubbles: Vec<ChartBubble>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBubble {
    #[serde(flatten)]
    pub bubble: Bubble,
    pub x_approx: f64,
    pub y_approx: f64,
    pub coverage_average_approx: Option<f64>,
}

impl ChartModel {
    pub fn from_picture(picture: &SituationalPicture) -> Self {
        ChartModel {
            schema_version: CHART_SCHEMA_VERSION,
            picture_id: picture.picture_id.clone(),
            kind: picture.kind,
            mode: picture.mode,
            round_ref: picture.round_ref,
            assessment_ref: picture.assessment_ref,
            created_at: picture.created_at,
            axes: picture.axis_metadata,
            bubbles: picture
                .bubbles
                .iter()
                .map(|b| ChartBubble {
                    bubble: b.clone(),
                    x_approx: b.x.to_f64(),
                    y_approx: b.y.to_f64(),
                    coverage_average_approx: b.coverage_average.map(|a| a.to_f64()),
                })
                .collect(),
        }
    }

    pub fn into_picture(self) -> Result<SituationalPicture> {
        if self.schema_version != CHART_SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: self.schema_version,
                expected: CHART_SCHEMA_VERSION,
            });
        }
        Ok(SituationalPicture {
            picture_id: self.picture_id,
            kind: self.kind,
            mode: self.mode,
            round_ref: self.round_ref,
            assessment_ref: self.assessment_ref,
            bubbles: self.bubbles.into_iter().map(|b| b.bubble).collect(),
            axis_metadata: self.axes,
            created_at: self.created_at,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("chart model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedFile(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderConfig {
    pub width: i64,
    pub height: i64,
    pub radius_small: i64,
    pub radius_medium: i64,
    pub radius_large: i64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 1000,
            height: 700,
            radius_small: 8,
            radius_medium: 14,
            radius_large: 22,
        }
    }
}

const MARGIN_LEFT: i64 = 120;
const MARGIN_RIGHT: i64 = 50;
const MARGIN_TOP: i64 = 50;
const MARGIN_BOTTOM: i64 = 110;

/// Label offsets for bubbles whose centers collide, indexed by how many
/// earlier bubbles they overlap.
const LABEL_OFFSETS: [(i64, i64); 9] = [
    (0, 0),
    (0, -18),
    (0, 18),
    (20, 0),
    (-20, 0),
    (16, -16),
    (-16, 16),
    (16, 16),
    (-16, -16),
];

pub fn fill_color(color: BubbleColor) -> &'static str {
    match color {
        BubbleColor::Green => "#2e9e44",
        BubbleColor::Yellow => "#f2c12e",
        BubbleColor::Red => "#d9453b",
        BubbleColor::Gray => "#a6a6a6",
    }
}

impl RenderConfig {
    pub fn radius(&self, size: SizeCode) -> i64 {
        match size {
            SizeCode::Small => self.radius_small,
            SizeCode::Medium => self.radius_medium,
            SizeCode::Large => self.radius_large,
        }
    }

    fn plot_width(&self) -> i64 {
        self.width - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_height(&self) -> i64 {
        self.height - MARGIN_TOP - MARGIN_BOTTOM
    }

    /// Canvas position in hundredths of a unit.
    fn project(&self, x: Fraction, y: Fraction) -> (i64, i64) {
        let px = Fraction::from_int(MARGIN_LEFT) + x * Fraction::from_int(self.plot_width());
        let py = Fraction::from_int(MARGIN_TOP)
            + (Fraction::ONE - y) * Fraction::from_int(self.plot_height());
        (px.round_scaled(100), py.round_scaled(100))
    }
}

fn centi(v: i64) -> String {
    Fraction::new(v, 100).to_decimal(2)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn axis_ticks(anchors: &AxisAnchors, low: &str, mid: &str, high: &str) -> Vec<(Fraction, String)> {
    let AxisAnchors {
        min_value,
        mid_anchor_value,
        max_value,
        ..
    } = *anchors;
    if min_value == max_value {
        return vec![(Fraction::HALF, format!("all cards ({min_value})"))];
    }
    let mut ticks = vec![(Fraction::ZERO, format!("{low} ({min_value})"))];
    if mid_anchor_value != min_value && mid_anchor_value != max_value {
        ticks.push((Fraction::HALF, format!("{mid} ({mid_anchor_value})")));
    }
    ticks.push((Fraction::ONE, format!("{high} ({max_value})")));
    ticks
}

/// Renders the picture as a standalone SVG 1.1 document.
///
/// Output depends only on the picture and config: all coordinates go through
/// exact rationals and are printed with two decimals.
pub fn render_svg(picture: &SituationalPicture, config: &RenderConfig) -> Vec<u8> {
    let mut s = String::new();
    let (w, h) = (config.width, config.height);
    let (left, right) = (MARGIN_LEFT, w - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, h - MARGIN_BOTTOM);
    let title = match picture.kind {
        PictureKind::TargetState => "Target state",
        PictureKind::Outcome => "Assessment outcome",
    };

    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(s, "<title>{title}: {}</title>", escape(&picture.picture_id));
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");

    // axes
    s.push_str("<g id=\"axes\" stroke=\"#333333\" stroke-width=\"1.5\">\n");
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\"/>");
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\"/>");
    s.push_str("</g>\n");

    s.push_str("<g id=\"ticks\" font-size=\"12\" fill=\"#333333\">\n");
    let x_ticks = axis_ticks(
        &picture.axis_metadata.relevance,
        "low importance",
        "mean card",
        "high importance",
    );
    for (pos, label) in &x_ticks {
        let (px, _) = config.project(*pos, Fraction::ZERO);
        let px = centi(px);
        let _ = writeln!(
            s,
            "<line x1=\"{px}\" y1=\"{top}\" x2=\"{px}\" y2=\"{bottom}\" stroke=\"#dddddd\" stroke-dasharray=\"4 4\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            bottom + 20,
            escape(label)
        );
    }
    let y_ticks = axis_ticks(
        &picture.axis_metadata.consensus,
        "highest harmony",
        "mean card",
        "lowest consensus",
    );
    for (pos, label) in &y_ticks {
        // consensus ticks are anchored in deviation counts: few deviations at the top
        let (_, py) = config.project(Fraction::ZERO, Fraction::ONE - *pos);
        let py = centi(py);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{py}\" x2=\"{right}\" y2=\"{py}\" stroke=\"#dddddd\" stroke-dasharray=\"4 4\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{py}\" text-anchor=\"end\" dominant-baseline=\"central\">{}</text>",
            left - 8,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">perceived relevance</text>",
        (left + right) / 2,
        bottom + 45
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 {cy})\">valuation consensus</text>",
        cy = (top + bottom) / 2
    );
    s.push_str("</g>\n");

    let centers: Vec<(i64, i64)> = picture
        .bubbles
        .iter()
        .map(|b| config.project(b.x, b.y))
        .collect();
    let connector = picture.mode == RenderMode::Connector;

    if connector {
        s.push_str("<g id=\"connectors\" stroke=\"#7a7a7a\" stroke-width=\"1.5\">\n");
        for (b, &(cx, cy)) in picture.bubbles.iter().zip(&centers) {
            if let Some(g) = b.ghost {
                let (gx, gy) = config.project(g.x0, g.y0);
                let _ = writeln!(
                    s,
                    "<line data-card=\"{}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
                    b.card_id.0,
                    centi(gx),
                    centi(gy),
                    centi(cx),
                    centi(cy)
                );
            }
        }
        s.push_str("</g>\n");
        s.push_str("<g id=\"ghosts\" fill-opacity=\"0.6\">\n");
        for b in &picture.bubbles {
            if let Some(g) = b.ghost {
                let (gx, gy) = config.project(g.x0, g.y0);
                let _ = writeln!(
                    s,
                    "<circle data-card=\"{}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" stroke=\"#7a7a7a\"/>",
                    b.card_id.0,
                    centi(gx),
                    centi(gy),
                    config.radius_medium,
                    fill_color(BubbleColor::Gray)
                );
            }
        }
        s.push_str("</g>\n");
    }

    // Larger bubbles first so smaller ones stay visible on top.
    let mut order: Vec<usize> = (0..picture.bubbles.len()).collect();
    let radius_of = |b: &Bubble| {
        if connector {
            config.radius_medium
        } else {
            config.radius(b.size)
        }
    };
    order.sort_by(|&a, &b| {
        radius_of(&picture.bubbles[b])
            .cmp(&radius_of(&picture.bubbles[a]))
            .then(picture.bubbles[a].card_id.cmp(&picture.bubbles[b].card_id))
    });

    // Collision index in card order: earlier bubbles within one medium radius.
    let near = config.radius_medium * 100;
    let collisions: Vec<usize> = (0..centers.len())
        .map(|i| {
            centers[..i]
                .iter()
                .filter(|&&(x, y)| {
                    let (dx, dy) = (x - centers[i].0, y - centers[i].1);
                    dx * dx + dy * dy < near * near
                })
                .count()
        })
        .collect();

    s.push_str("<g id=\"bubbles\" font-size=\"11\">\n");
    for &i in &order {
        let b = &picture.bubbles[i];
        let (cx, cy) = centers[i];
        let k = collisions[i];
        let (ox, oy) = LABEL_OFFSETS[k % LABEL_OFFSETS.len()];
        let ring = (k / LABEL_OFFSETS.len()) as i64 + 1;
        let (lx, ly) = (cx + ox * ring * 100, cy + oy * ring * 100);
        let mut tip = format!(
            "{} {} | tokens {} | deviations {}",
            b.label, b.name, b.total_tokens, b.deviation_count
        );
        if let Some(avg) = b.coverage_average {
            let _ = write!(tip, " | coverage {}", avg.to_decimal(2));
        }
        let _ = writeln!(s, "<g class=\"bubble\" data-card=\"{}\">", b.card_id.0);
        let _ = writeln!(s, "<title>{}</title>", escape(&tip));
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" fill-opacity=\"0.85\" stroke=\"#333333\"/>",
            centi(cx),
            centi(cy),
            radius_of(b),
            fill_color(b.color)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" dominant-baseline=\"central\">{}</text>",
            centi(lx),
            centi(ly),
            escape(&b.label)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n");

    render_legend(&mut s, picture, config);
    s.push_str("</svg>\n");
    s.into_bytes()
}

fn render_legend(s: &mut String, picture: &SituationalPicture, config: &RenderConfig) {
    let y = config.height - 25;
    s.push_str("<g id=\"legend\" font-size=\"12\" fill=\"#333333\">\n");
    let mut x = MARGIN_LEFT;
    let swatches: &[(BubbleColor, &str)] = match picture.kind {
        PictureKind::TargetState => &[(BubbleColor::Gray, "target state")],
        PictureKind::Outcome => &[
            (BubbleColor::Green, "coverage 4-5"),
            (BubbleColor::Yellow, "coverage 3-4"),
            (BubbleColor::Red, "coverage below 3"),
        ],
    };
    for (color, label) in swatches {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{y}\" r=\"6\" fill=\"{}\" stroke=\"#333333\"/>",
            x + 6,
            fill_color(*color)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" dominant-baseline=\"central\">{label}</text>",
            x + 16
        );
        x += 150;
    }
    if picture.kind == PictureKind::Outcome {
        let note = match picture.mode {
            RenderMode::SizeCoding => "size: small = priority lowered, medium = unchanged, large = raised",
            RenderMode::Connector => "gray: target-state position",
        };
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{y}\" dominant-baseline=\"central\">{note}</text>");
    }
    s.push_str("</g>\n");
}
