//! Line-oriented input files.
//!
//! ```text
//! # derivation systems
//! member {1,2} e[1](1,2)*e[2](2,1)
//! family e[1](1,2)*e[2](1,1) start=1
//! # endomorphisms, by generator images or as a product of conjugations
//! image 1 1 2 e[1](1,2)
//! conjugator id + e[1](1,2)*e[2](2,2)
//! ```

use std::collections::BTreeSet;

use locmat::derivations::SparseSystem;
use locmat::{Element, FieldSpec, Label, SiteShape};

use crate::expr::{parse_and_eval_at, ExprError, SyntaxError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Line {
    Member {
        sites: BTreeSet<usize>,
        element: Element,
    },
    Family {
        template: Element,
        start: usize,
    },
    Image {
        site: usize,
        label: Label,
        element: Element,
    },
    Conjugator(Element),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InputFile {
    pub lines: Vec<(usize, Line)>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ExprError {
    SyntaxError {
        line,
        column,
        message: message.into(),
    }
    .into()
}

/// Splits off the first whitespace-delimited word; returns it with its
/// 1-based column and the remainder with its column.
fn word(text: &str, column: usize) -> Option<(&str, usize, &str, usize)> {
    let lead = text.len() - text.trim_start().len();
    let rest = &text[lead..];
    if rest.is_empty() {
        return None;
    }
    let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    Some((
        &rest[..end],
        column + lead,
        &rest[end..],
        column + lead + end,
    ))
}

fn number<'a>(
    w: Option<(&str, usize, &'a str, usize)>,
    line: usize,
    what: &str,
) -> Result<(usize, &'a str, usize), ExprError> {
    let (w, col, rest, rcol) = w.ok_or_else(|| syntax(line, 1, format!("missing {what}")))?;
    let v = w
        .parse()
        .map_err(|_| syntax(line, col, format!("expected {what}")))?;
    Ok((v, rest, rcol))
}

fn site_set(text: &str, line: usize, column: usize) -> Result<BTreeSet<usize>, ExprError> {
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| syntax(line, column, "expected a site set like {1,2}"))?;
    inner
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| syntax(line, column, "expected a site set like {1,2}"))
        })
        .collect()
}

pub fn parse_input(
    text: &str,
    field: FieldSpec,
    shape: &SiteShape,
) -> Result<InputFile, ExprError> {
    let mut out = InputFile::default();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let Some((kw, kcol, rest, rcol)) = word(content, 1) else {
            continue;
        };
        let parsed = match kw {
            "member" => {
                // The site set may contain spaces, so it runs to the closing brace.
                let lead = rest.len() - rest.trim_start().len();
                let body = rest.trim_start();
                let close = body
                    .find('}')
                    .ok_or_else(|| syntax(ln, rcol + lead, "expected a site set like {1,2}"))?;
                let sites = site_set(&body[..=close], ln, rcol + lead)?;
                let ecol = rcol + lead + close + 1;
                let element = parse_and_eval_at(&body[close + 1..], ln, ecol, field, shape)?;
                Line::Member { sites, element }
            }
            "family" => {
                let key = rest
                    .rfind("start=")
                    .ok_or_else(|| syntax(ln, rcol, "missing start=<n>"))?;
                let start = rest[key + 6..]
                    .trim()
                    .parse()
                    .map_err(|_| syntax(ln, rcol + key + 6, "expected start=<n>"))?;
                let template = parse_and_eval_at(&rest[..key], ln, rcol, field, shape)?;
                Line::Family { template, start }
            }
            "image" => {
                let (site, rest, c) = number(word(rest, rcol), ln, "a site")?;
                let (p, rest, c) = number(word(rest, c), ln, "a row index")?;
                let (q, rest, c) = number(word(rest, c), ln, "a column index")?;
                let element = parse_and_eval_at(rest, ln, c, field, shape)?;
                Line::Image {
                    site,
                    label: (p, q),
                    element,
                }
            }
            "conjugator" => Line::Conjugator(parse_and_eval_at(rest, ln, rcol, field, shape)?),
            other => return Err(syntax(ln, kcol, format!("unknown directive '{other}'"))),
        };
        out.lines.push((ln, parsed));
    }
    Ok(out)
}

impl InputFile {
    pub fn has_system(&self) -> bool {
        self.lines
            .iter()
            .any(|(_, l)| matches!(l, Line::Member { .. } | Line::Family { .. }))
    }

    pub fn has_images(&self) -> bool {
        self.lines
            .iter()
            .any(|(_, l)| matches!(l, Line::Image { .. }))
    }

    pub fn has_conjugators(&self) -> bool {
        self.lines
            .iter()
            .any(|(_, l)| matches!(l, Line::Conjugator(_)))
    }

    pub fn system(
        &self,
        field: FieldSpec,
        shape: &SiteShape,
    ) -> Result<SparseSystem, locmat::Error> {
        let mut s = SparseSystem::new(field, shape);
        for (_, l) in &self.lines {
            match l {
                Line::Member { sites, element } => s.push_member(sites.clone(), element.clone())?,
                Line::Family { template, start } => s.push_family(template.clone(), *start)?,
                _ => {}
            }
        }
        Ok(s)
    }

    pub fn images(&self) -> Vec<((usize, Label), Element)> {
        self.lines
            .iter()
            .filter_map(|(_, l)| match l {
                Line::Image {
                    site,
                    label,
                    element,
                } => Some(((*site, *label), element.clone())),
                _ => None,
            })
            .collect()
    }

    /// Largest site with a given image.
    pub fn image_level(&self) -> usize {
        self.images()
            .iter()
            .map(|((s, _), _)| *s)
            .max()
            .unwrap_or(0)
    }

    pub fn conjugators(&self) -> Vec<Element> {
        self.lines
            .iter()
            .filter_map(|(_, l)| match l {
                Line::Conjugator(e) => Some(e.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Prints a system in the input format.
pub fn format_system(s: &SparseSystem) -> String {
    let mut out = String::new();
    for m in s.finite() {
        let sites: Vec<String> = m.sites.iter().map(usize::to_string).collect();
        out.push_str(&format!("member {{{}}} {}\n", sites.join(","), m.element));
    }
    for f in s.families() {
        out.push_str(&format!("family {} start={}\n", f.template(), f.start()));
    }
    if out.is_empty() {
        out.push_str("# zero derivation\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: FieldSpec = FieldSpec::Rationals;

    fn sh() -> SiteShape {
        SiteShape::uniform(2).unwrap()
    }

    #[test]
    fn reads_all_directives() {
        let text = "# z\nfamily e[1](1,2)*e[2](1,1) start=1\nmember { 1, 3 } e[1](1,2)*e[3](2,1)\n\nimage 1 1 2 e[1](1,2) # same\nconjugator id + e[1](2,2)\n";
        let f = parse_input(text, Q, &sh()).unwrap();
        assert_eq!(f.lines.len(), 4);
        assert!(f.has_system() && f.has_images() && f.has_conjugators());
        let s = f.system(Q, &sh()).unwrap();
        assert_eq!(s.families().len(), 1);
        assert_eq!(s.finite()[0].sites, BTreeSet::from([1, 3]));
        assert_eq!(f.image_level(), 1);
        let round = parse_input(&format_system(&s), Q, &sh())
            .unwrap()
            .system(Q, &sh())
            .unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn errors_point_into_the_file() {
        let err = parse_input(
            "member {1} e[1](1,2)\nfamily e[1](1,,2) start=1\n",
            Q,
            &sh(),
        )
        .unwrap_err();
        match err {
            ExprError::Syntax(e) => assert_eq!((e.line, e.column), (2, 15)),
            other => panic!("{other:?}"),
        }
        assert!(parse_input("bogus 1", Q, &sh()).is_err());
        assert!(parse_input("image 1 x 2 id", Q, &sh()).is_err());
    }
}
