//! Parsed view of a rendered page: the page-object foundation.
//!
//! Only elements carrying an `id` matter to tests. Each gets a value:
//! inputs report their `value` attribute, selects the selected option's
//! value (else the first option's), forms their `action`, and everything
//! else its own text with whitespace collapsed.

use std::collections::{BTreeMap, BTreeSet};

use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};

const ACTIVE_TAGS: &[&str] = &[
    "a", "button", "form", "input", "option", "select", "textarea",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Active,
    Passive,
}

pub fn kind_of_tag(tag: &str) -> ElementKind {
    if ACTIVE_TAGS.contains(&tag) {
        ElementKind::Active
    } else {
        ElementKind::Passive
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageElement {
    pub id: String,
    pub tag: String,
    pub kind: ElementKind,
    pub value: String,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormData {
    pub action: String,
    pub method: String,
    /// Named controls in document order with their current values.
    pub fields: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPage {
    pub status: u16,
    /// `data-view` of the body, empty when absent.
    pub view: String,
    /// Request target the page was served for.
    pub url: String,
    /// Elements with an id, in document order.
    pub elements: Vec<PageElement>,
    pub forms: BTreeMap<String, FormData>,
    pub duplicate_ids: Vec<String>,
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn direct_text(el: ElementRef<'_>) -> String {
    let mut s = String::new();
    for child in el.children() {
        if let Node::Text(t) = child.value() {
            s.push_str(t);
        }
    }
    collapse(&s)
}

fn select_value(el: ElementRef<'_>) -> String {
    let options: Vec<ElementRef<'_>> = el
        .descendants()
        .filter_map(ElementRef::wrap)
        .filter(|e| e.value().name() == "option")
        .collect();
    let chosen = options
        .iter()
        .find(|o| o.value().attr("selected").is_some())
        .or_else(|| options.first());
    chosen
        .map(|o| {
            o.value()
                .attr("value")
                .map(str::to_string)
                .unwrap_or_else(|| direct_text(*o))
        })
        .unwrap_or_default()
}

fn value_of(el: ElementRef<'_>) -> String {
    let v = el.value();
    match v.name() {
        "input" => v.attr("value").unwrap_or_default().to_string(),
        "select" => select_value(el),
        "form" => v.attr("action").unwrap_or_default().to_string(),
        _ => direct_text(el),
    }
}

fn form_fields(form: ElementRef<'_>) -> Vec<(String, String)> {
    form.descendants()
        .filter_map(ElementRef::wrap)
        .filter_map(|e| {
            let name = e.value().attr("name")?;
            match e.value().name() {
                "input" | "select" | "textarea" => Some((name.to_string(), value_of(e))),
                _ => None,
            }
        })
        .collect()
}

impl ParsedPage {
    pub fn parse(status: u16, url: &str, html: &str) -> ParsedPage {
        let doc = Html::parse_document(html);
        let body = Selector::parse("body").expect("static selector");
        let with_id = Selector::parse("[id]").expect("static selector");
        let view = doc
            .select(&body)
            .next()
            .and_then(|b| b.value().attr("data-view"))
            .unwrap_or_default()
            .to_string();
        let mut elements = Vec::new();
        let mut forms = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mut duplicate_ids = Vec::new();
        for el in doc.select(&with_id) {
            let v = el.value();
            let id = v.attr("id").unwrap_or_default().to_string();
            if !seen.insert(id.clone()) {
                duplicate_ids.push(id.clone());
            }
            let tag = v.name().to_string();
            if tag == "form" {
                forms.insert(
                    id.clone(),
                    FormData {
                        action: v.attr("action").unwrap_or_default().to_string(),
                        method: v.attr("method").unwrap_or("get").to_ascii_lowercase(),
                        fields: form_fields(el),
                    },
                );
            }
            elements.push(PageElement {
                kind: kind_of_tag(&tag),
                value: value_of(el),
                attrs: v
                    .attrs()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                id,
                tag,
            });
        }
        ParsedPage {
            status,
            view,
            url: url.to_string(),
            elements,
            forms,
            duplicate_ids,
        }
    }

    pub fn element(&self, id: &str) -> Option<&PageElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn value(&self, id: &str) -> Option<&str> {
        self.element(id).map(|e| e.value.as_str())
    }

    /// `(id, value)` pairs in document order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.elements
            .iter()
            .map(|e| (e.id.clone(), e.value.clone()))
            .collect()
    }

    /// Flash as `kind:code`, read from the `flash-message` element.
    pub fn flash(&self) -> Option<String> {
        let el = self.element("flash-message")?;
        let kind = match el.attrs.get("class").map(String::as_str) {
            Some("flash-ok") => "ok",
            Some("flash-error") => "error",
            _ => "unknown",
        };
        Some(format!("{kind}:{}", el.value))
    }
}
