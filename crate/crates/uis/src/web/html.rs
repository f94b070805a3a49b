//! Minimal XHTML-compatible writer that records every element id it emits.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    /// User controls: links, forms, buttons, inputs, selections.
    Active,
    /// Everything else carrying an id: data cells, headings, containers.
    Passive,
}

/// Kind tagging contract shared with page objects: decided by tag name.
pub fn kind_of_tag(tag: &str) -> ElementKind {
    match tag {
        "a" | "button" | "form" | "input" | "option" | "select" | "textarea" => ElementKind::Active,
        _ => ElementKind::Passive,
    }
}

pub fn escape(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

#[derive(Debug, Default)]
pub struct HtmlWriter {
    out: String,
    stack: Vec<&'static str>,
    index: BTreeMap<String, ElementKind>,
    duplicate: Option<String>,
}

impl HtmlWriter {
    pub fn new() -> Self {
        Self::default()
    }

    fn start_tag(&mut self, tag: &'static str, id: Option<&str>, attrs: &[(&str, &str)]) {
        self.out.push('<');
        self.out.push_str(tag);
        if let Some(id) = id {
            if self
                .index
                .insert(id.to_string(), kind_of_tag(tag))
                .is_some()
                && self.duplicate.is_none()
            {
                self.duplicate = Some(id.to_string());
            }
            self.out.push_str(" id=\"");
            escape(id, &mut self.out);
            self.out.push('"');
        }
        for (name, value) in attrs {
            self.out.push(' ');
            self.out.push_str(name);
            self.out.push_str("=\"");
            escape(value, &mut self.out);
            self.out.push('"');
        }
    }

    pub fn raw(&mut self, markup: &str) {
        self.out.push_str(markup);
    }

    pub fn open(&mut self, tag: &'static str, id: Option<&str>, attrs: &[(&str, &str)]) {
        self.start_tag(tag, id, attrs);
        self.out.push('>');
        self.stack.push(tag);
    }

    pub fn close(&mut self) {
        let tag = self.stack.pop().expect("close without open");
        self.out.push_str("</");
        self.out.push_str(tag);
        self.out.push('>');
    }

    pub fn text(&mut self, text: &str) {
        escape(text, &mut self.out);
    }

    pub fn leaf(
        &mut self,
        tag: &'static str,
        id: Option<&str>,
        attrs: &[(&str, &str)],
        text: &str,
    ) {
        self.open(tag, id, attrs);
        self.text(text);
        self.close();
    }

    /// Self-closing element such as `<input />`.
    pub fn void(&mut self, tag: &'static str, id: Option<&str>, attrs: &[(&str, &str)]) {
        self.start_tag(tag, id, attrs);
        self.out.push_str(" />");
    }

    pub fn newline(&mut self) {
        self.out.push('\n');
    }

    /// Returns the markup and id index, or the first duplicated id.
    pub fn finish(mut self) -> Result<(String, BTreeMap<String, ElementKind>), String> {
        while !self.stack.is_empty() {
            self.close();
        }
        match self.duplicate {
            Some(id) => Err(id),
            None => Ok((self.out, self.index)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_and_indexes() {
        let mut w = HtmlWriter::new();
        w.open("p", Some("a"), &[("class", "x\"y")]);
        w.text("<b> & 'c'");
        w.close();
        w.void("input", Some("b"), &[("value", "1")]);
        let (html, index) = w.finish().unwrap();
        assert_eq!(
            html,
            "<p id=\"a\" class=\"x&quot;y\">&lt;b&gt; &amp; &#39;c&#39;</p><input id=\"b\" value=\"1\" />"
        );
        assert_eq!(index["a"], ElementKind::Passive);
        assert_eq!(index["b"], ElementKind::Active);
    }

    #[test]
    fn reports_duplicate_ids() {
        let mut w = HtmlWriter::new();
        w.leaf("span", Some("x"), &[], "1");
        w.leaf("span", Some("x"), &[], "2");
        assert_eq!(w.finish().unwrap_err(), "x");
    }

    #[test]
    fn finish_closes_open_tags() {
        let mut w = HtmlWriter::new();
        w.open("div", None, &[]);
        w.open("span", None, &[]);
        let (html, _) = w.finish().unwrap();
        assert_eq!(html, "<div><span></span></div>");
    }
}
