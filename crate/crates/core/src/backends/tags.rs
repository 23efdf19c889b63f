//! `<START>…<END>` span parsing for optimizer replies.

pub const START: &str = "<START>";
pub const END: &str = "<END>";

/// Extracts every closed `<START>…<END>` span, scanning left to right.
///
/// An opening tag that is followed by another opening tag before any closing
/// tag is abandoned, so an unclosed span never swallows its neighbours. Span
/// contents are returned verbatim.
pub fn parse_tagged(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(START) {
        let body = &rest[open + START.len()..];
        let close = body.find(END);
        let reopen = body.find(START);
        match (close, reopen) {
            (Some(c), Some(r)) if r < c => rest = &body[r..],
            (Some(c), _) => {
                out.push(body[..c].to_string());
                rest = &body[c + END.len()..];
            }
            (None, _) => break,
        }
    }
    out
}

/// Inverse of [`parse_tagged`] for tag-free spans.
pub fn render_tagged<S: AsRef<str>>(spans: &[S], separator: &str) -> String {
    spans
        .iter()
        .map(|s| format!("{START}{}{END}", s.as_ref()))
        .collect::<Vec<_>>()
        .join(separator)
}

/// Parsed spans, trimmed, with empty ones dropped.
pub fn parse_clean(text: &str) -> Vec<String> {
    parse_tagged(text)
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
