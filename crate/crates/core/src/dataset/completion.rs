//! Completion text layout and its strict parser.
//!
//! ```text
//! output  := ws prediction? ws think? ws actions ws traj ws EOF
//! prediction := "<prediction>" text "</prediction>"
//! think   := "<think>" text "</think>"
//! actions := "### Correct action:" ws "[" pair ("," pair)* "]"      (3 pairs)
//! pair    := "[" qname "," qname "]"
//! traj    := "### 3-second trajectory:" ws "[" tuple ("," tuple)* "]"  (6 tuples)
//! tuple   := "(" num "," num ")"
//! ```
//!
//! Whitespace is allowed between all tokens, and action names may use single
//! or double quotes. Errors carry byte offsets into the input.

use std::fmt::Write;

use thiserror::Error;

use crate::geometry::{Trajectory, Waypoint, HORIZON_S, HORIZON_STEPS};
use crate::meta_actions::{
    normalize_action_name, ActionSequence, Formulation, LateralAction, LongitudinalAction, MetaAction,
};

const PREDICTION_OPEN: &str = "<prediction>";
const PREDICTION_CLOSE: &str = "</prediction>";
const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ACTION_HEADER: &str = "### Correct action:";
const TRAJECTORY_HEADER: &str = "### 3-second trajectory:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Actions,
    Trajectory,
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Section::Actions => "actions",
            Section::Trajectory => "trajectory",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing {section} section at byte {offset}")]
    MissingSection { section: Section, offset: usize },
    #[error("{section}: expected {expected} entries, found {found} (list at byte {offset})")]
    BadArity {
        section: Section,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("unknown action '{token}' at byte {offset}")]
    UnknownAction { token: String, offset: usize },
    #[error("malformed number '{text}' at bytes {start}..{end}")]
    MalformedNumber { text: String, start: usize, end: usize },
    #[error("expected {expected} at byte {offset}")]
    Syntax { expected: &'static str, offset: usize },
    #[error("unterminated {tag} block opened at byte {offset}")]
    UnterminatedBlock { tag: &'static str, offset: usize },
    #[error("unexpected trailing input at byte {offset}")]
    TrailingInput { offset: usize },
}

impl ParseError {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MissingSection { .. } => "missing_section",
            ParseError::BadArity { .. } => "bad_arity",
            ParseError::UnknownAction { .. } => "unknown_action",
            ParseError::MalformedNumber { .. } => "malformed_number",
            ParseError::Syntax { .. } => "syntax",
            ParseError::UnterminatedBlock { .. } => "unterminated_block",
            ParseError::TrailingInput { .. } => "trailing_input",
        }
    }

    /// Byte offset the error points at.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::MissingSection { offset, .. }
            | ParseError::BadArity { offset, .. }
            | ParseError::UnknownAction { offset, .. }
            | ParseError::Syntax { offset, .. }
            | ParseError::UnterminatedBlock { offset, .. }
            | ParseError::TrailingInput { offset } => *offset,
            ParseError::MalformedNumber { start, .. } => *start,
        }
    }
}

/// Parsed completion. Block texts are stored trimmed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub prediction: Option<String>,
    pub think: Option<String>,
    pub actions: ActionSequence,
    pub trajectory: Trajectory,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    v.to_string()
}

/// `[['LAT', 'LON'], ['LAT', 'LON'], ['LAT', 'LON']]`
pub fn format_actions(actions: &ActionSequence) -> String {
    let items: Vec<String> = actions.actions.iter().map(|a| a.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// `[(x1,y1), (x2,y2), ...]`
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("[");
    for (i, w) in traj.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "({},{})", format_number(w.x), format_number(w.y));
    }
    out.push(']');
    out
}

/// Renders the completion layout; absent blocks are omitted.
pub fn serialize_completion(m: &ModelOutput) -> String {
    let mut blocks = Vec::new();
    if let Some(p) = &m.prediction {
        blocks.push(format!("{PREDICTION_OPEN} {p} {PREDICTION_CLOSE}"));
    }
    if let Some(t) = &m.think {
        blocks.push(format!("{THINK_OPEN} {t} {THINK_CLOSE}"));
    }
    let mut out = blocks.join(" ");
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    let _ = write!(
        out,
        "{ACTION_HEADER} {}\n\n{TRAJECTORY_HEADER} {}",
        format_actions(&m.actions),
        format_trajectory(&m.trajectory)
    );
    out
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn at_end(&self) -> bool {
        self.pos == self.src.len()
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &'static str) -> Result<(), ParseError> {
        self.skip_ws();
        if self.eat(token) {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                expected: token,
                offset: self.pos,
            })
        }
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    /// `open text close`, returning the trimmed text.
    fn block(&mut self, open: &'static str, close: &'static str) -> Result<Option<String>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if !self.eat(open) {
            return Ok(None);
        }
        let Some(len) = self.rest().find(close) else {
            return Err(ParseError::UnterminatedBlock { tag: open, offset: start });
        };
        let text = self.rest()[..len].trim().to_string();
        self.pos += len + close.len();
        Ok(Some(text))
    }

    fn header(&mut self, header: &str, section: Section) -> Result<(), ParseError> {
        self.skip_ws();
        if self.eat(header) {
            Ok(())
        } else {
            Err(ParseError::MissingSection {
                section,
                offset: self.pos,
            })
        }
    }

    /// Parses `[ item, item, ... ]` and returns the items with the list offset.
    fn list<T>(
        &mut self,
        open: &'static str,
        close: &'static str,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<(Vec<T>, usize), ParseError> {
        self.skip_ws();
        let offset = self.pos;
        self.expect(open)?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.eat(close) {
            return Ok((items, offset));
        }
        loop {
            items.push(item(self)?);
            self.skip_ws();
            if self.eat(",") {
                continue;
            }
            if self.eat(close) {
                return Ok((items, offset));
            }
            return Err(ParseError::Syntax {
                expected: "',' or closing bracket",
                offset: self.pos,
            });
        }
    }

    /// A quoted name; returns the raw token and its offset.
    fn quoted(&mut self) -> Result<(&'a str, usize), ParseError> {
        self.skip_ws();
        let offset = self.pos;
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => {
                return Err(ParseError::Syntax {
                    expected: "quoted action name",
                    offset,
                })
            }
        };
        self.pos += 1;
        let Some(len) = self.rest().find(quote) else {
            return Err(ParseError::Syntax {
                expected: "closing quote",
                offset: self.src.len(),
            });
        };
        let token = &self.rest()[..len];
        self.pos += len + 1;
        Ok((token, offset + 1))
    }

    fn action<T: std::str::FromStr>(&mut self) -> Result<T, ParseError> {
        let (token, offset) = self.quoted()?;
        normalize_action_name(token).parse().map_err(|_| ParseError::UnknownAction {
            token: token.to_string(),
            offset,
        })
    }

    fn pair(&mut self) -> Result<MetaAction, ParseError> {
        self.expect("[")?;
        let lateral: LateralAction = self.action()?;
        self.expect(",")?;
        let longitudinal: LongitudinalAction = self.action()?;
        self.expect("]")?;
        Ok(MetaAction::new(lateral, longitudinal))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(ParseError::Syntax {
                expected: "number",
                offset: start,
            });
        }
        let text = &self.rest()[..len];
        self.pos += len;
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::MalformedNumber {
                text: text.to_string(),
                start,
                end: self.pos,
            }),
        }
    }

    fn tuple(&mut self) -> Result<Waypoint, ParseError> {
        self.expect("(")?;
        let x = self.number()?;
        self.expect(",")?;
        let y = self.number()?;
        self.expect(")")?;
        Ok(Waypoint::new(x, y))
    }

    fn actions(&mut self) -> Result<ActionSequence, ParseError> {
        let (pairs, offset) = self.list("[", "]", Self::pair)?;
        let found = pairs.len();
        ActionSequence::from_vec(pairs, Formulation::Local).map_err(|_| ParseError::BadArity {
            section: Section::Actions,
            expected: HORIZON_S,
            found,
            offset,
        })
    }

    fn trajectory(&mut self) -> Result<Trajectory, ParseError> {
        let (points, offset) = self.list("[", "]", Self::tuple)?;
        let found = points.len();
        Trajectory::try_from(points).map_err(|_| ParseError::BadArity {
            section: Section::Trajectory,
            expected: HORIZON_STEPS,
            found,
            offset,
        })
    }
}

/// Parses a completion into its sections.
pub fn parse_model_output(text: &str) -> Result<ModelOutput, ParseError> {
    let mut cur = Cursor::new(text);
    let prediction = cur.block(PREDICTION_OPEN, PREDICTION_CLOSE)?;
    let think = cur.block(THINK_OPEN, THINK_CLOSE)?;
    cur.header(ACTION_HEADER, Section::Actions)?;
    let actions = cur.actions()?;
    cur.header(TRAJECTORY_HEADER, Section::Trajectory)?;
    let trajectory = cur.trajectory()?;
    cur.skip_ws();
    if !cur.at_end() {
        return Err(ParseError::TrailingInput { offset: cur.pos });
    }
    Ok(ModelOutput {
        prediction,
        think,
        actions,
        trajectory,
    })
}

/// Parses a verifier reply `(['LAT', 'LON'], confidence)`. The surrounding
/// parentheses and the confidence are optional.
pub fn parse_action_reply(text: &str) -> Result<(MetaAction, Option<f64>), ParseError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    let parenthesized = cur.eat("(");
    let action = cur.pair()?;
    cur.skip_ws();
    let confidence = if cur.eat(",") { Some(cur.number()?) } else { None };
    if parenthesized {
        cur.expect(")")?;
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(ParseError::TrailingInput { offset: cur.pos });
    }
    Ok((action, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use LateralAction::*;
    use LongitudinalAction::*;

    fn output() -> ModelOutput {
        ModelOutput {
            prediction: Some("car 7: [(3.5,14), (3.5,16)]".into()),
            think: Some("Lead car is slowing; keep the lane.".into()),
            actions: ActionSequence::local([
                MetaAction::CRUISE,
                MetaAction::new(VeerLeft, Decelerate),
                MetaAction::new(Straight, BrakeToStop),
            ]),
            trajectory: Trajectory::from_fn(|i| Waypoint::new(1.25 - i as f64, -0.5 + 2.0 * i as f64)).unwrap(),
        }
    }

    #[test]
    fn layout_matches_template() {
        let text = serialize_completion(&output());
        assert!(text.starts_with("<prediction> car 7: [(3.5,14), (3.5,16)] </prediction> <think> Lead car"));
        assert!(text.contains(
            "</think>\n\n### Correct action: [['STRAIGHT', 'MAINTAIN'], ['VEER_LEFT', 'DECELERATE'], ['STRAIGHT', 'BRAKE_TO_STOP']]\n\n### 3-second trajectory: [(1.25,-0.5), (0.25,1.5),"
        ));
        assert_eq!(parse_model_output(&text).unwrap(), output());
    }

    #[test]
    fn blocks_are_optional() {
        let bare = ModelOutput {
            prediction: None,
            think: None,
            ..output()
        };
        let text = serialize_completion(&bare);
        assert!(text.starts_with("### Correct action:"));
        assert_eq!(parse_model_output(&text).unwrap(), bare);
        let think_only = ModelOutput {
            prediction: None,
            ..output()
        };
        assert_eq!(parse_model_output(&serialize_completion(&think_only)).unwrap(), think_only);
    }

    #[test]
    fn number_rendering() {
        assert_eq!(format_number(1.25), "1.25");
        assert_eq!(format_number(-0.5), "-0.5");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(0.1 + 0.2), "0.30000000000000004");
    }

    #[test]
    fn tolerant_of_whitespace_and_quotes() {
        let text = "  <think>ok</think>\n### Correct action:[[\"turn left\" , 'maintain'],['STRAIGHT','MAINTAIN'] ,\n ['veer-right', \"ACCELERATE\"]]\n### 3-second trajectory:\n[( 1 , 2 ),(3,4),(5,6),(7,8),(9,1e1),(-1.5E-1,+2)]  \n";
        let m = parse_model_output(text).unwrap();
        assert_eq!(m.think.as_deref(), Some("ok"));
        assert_eq!(m.actions.actions[0], MetaAction::new(TurnLeft, Maintain));
        assert_eq!(m.actions.actions[2], MetaAction::new(VeerRight, Accelerate));
        assert_eq!(m.trajectory[4], Waypoint::new(9.0, 10.0));
        assert_eq!(m.trajectory[5], Waypoint::new(-0.15, 2.0));
    }

    #[test]
    fn missing_trajectory() {
        let text = "### Correct action: [['STRAIGHT', 'MAINTAIN'], ['STRAIGHT', 'MAINTAIN'], ['STRAIGHT', 'MAINTAIN']]";
        assert_eq!(
            parse_model_output(text),
            Err(ParseError::MissingSection {
                section: Section::Trajectory,
                offset: text.len()
            })
        );
        assert!(matches!(
            parse_model_output("<think> x </think> nothing"),
            Err(ParseError::MissingSection { section: Section::Actions, offset: 19 })
        ));
    }

    #[test]
    fn arity_errors() {
        let mut text = serialize_completion(&output());
        let cut = text.rfind(", (").unwrap();
        text.replace_range(cut..text.len() - 1, "");
        match parse_model_output(&text) {
            Err(ParseError::BadArity {
                section: Section::Trajectory,
                expected: 6,
                found: 5,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let two = "### Correct action: [['STRAIGHT', 'MAINTAIN'], ['STRAIGHT', 'MAINTAIN']]\n### 3-second trajectory: []";
        assert!(matches!(
            parse_model_output(two),
            Err(ParseError::BadArity { section: Section::Actions, expected: 3, found: 2, offset: 20 })
        ));
    }

    #[test]
    fn unknown_action_and_bad_number() {
        let text = "### Correct action: [['STRAIGHT', 'HOVER'], ['STRAIGHT', 'MAINTAIN'], ['STRAIGHT', 'MAINTAIN']]";
        assert_eq!(
            parse_model_output(text),
            Err(ParseError::UnknownAction {
                token: "HOVER".into(),
                offset: 35
            })
        );
        // A longitudinal name in the lateral slot is not a lateral action.
        let swapped = "### Correct action: [['MAINTAIN', 'STRAIGHT']";
        assert!(matches!(parse_model_output(swapped), Err(ParseError::UnknownAction { offset: 23, .. })));

        let good = serialize_completion(&output());
        let bad = good.replace("(0.25,1.5)", "(0.2.5,1.5)");
        let start = bad.find("0.2.5").unwrap();
        assert_eq!(
            parse_model_output(&bad),
            Err(ParseError::MalformedNumber {
                text: "0.2.5".into(),
                start,
                end: start + 5
            })
        );
    }

    #[test]
    fn trailing_and_unterminated() {
        let good = serialize_completion(&output());
        assert!(matches!(
            parse_model_output(&format!("{good} extra")),
            Err(ParseError::TrailingInput { .. })
        ));
        assert_eq!(
            parse_model_output("  <think> never closed"),
            Err(ParseError::UnterminatedBlock { tag: "<think>", offset: 2 })
        );
    }

    #[test]
    fn verifier_reply() {
        let (a, c) = parse_action_reply("(['VEER_LEFT', 'DECELERATE'], 4)").unwrap();
        assert_eq!(a, MetaAction::new(VeerLeft, Decelerate));
        assert_eq!(c, Some(4.0));
        let (a, c) = parse_action_reply(" [\"STRAIGHT\", \"MAINTAIN\"] ").unwrap();
        assert_eq!((a, c), (MetaAction::CRUISE, None));
        assert!(parse_action_reply("(['STRAIGHT', 'MAINTAIN'], 4").is_err());
    }
}
