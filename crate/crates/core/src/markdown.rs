//! Small Markdown to self-contained HTML converter.
//!
//! Handles the subset the reports emit: `#`-`###` headings, paragraphs,
//! `**bold**`, `` `code` ``, fenced code blocks, `-`/`*` lists and pipe
//! tables. Everything else passes through as escaped paragraph text.

const STYLESHEET: &str = "\
:root{color-scheme:light dark;--fg:#1f2328;--bg:#ffffff;--muted:#59636e;--line:#d1d9e0;--code:#f6f8fa}\
@media (prefers-color-scheme:dark){:root{--fg:#e6edf3;--bg:#0d1117;--muted:#9198a1;--line:#3d444d;--code:#151b23}}\
body{font-family:-apple-system,BlinkMacSystemFont,'Segoe UI',Helvetica,Arial,sans-serif;\
color:var(--fg);background:var(--bg);max-width:960px;margin:2rem auto;padding:0 1rem;line-height:1.5}\
h1,h2,h3{line-height:1.25;margin:1.5rem 0 .75rem}h1{font-size:1.8rem;border-bottom:1px solid var(--line);padding-bottom:.3rem}\
h2{font-size:1.4rem}h3{font-size:1.15rem}p{margin:.5rem 0 1rem}\
table{border-collapse:collapse;margin:0 0 1rem;width:100%}th,td{border:1px solid var(--line);padding:.35rem .6rem;text-align:left}\
th{background:var(--code)}tbody tr:nth-child(even){background:var(--code)}\
code{font-family:ui-monospace,SFMono-Regular,Menlo,Consolas,monospace;background:var(--code);padding:.1rem .3rem;border-radius:4px}\
pre{background:var(--code);padding:.75rem;border-radius:6px;overflow:auto}pre code{padding:0}\
ul{padding-left:1.5rem}.muted{color:var(--muted)}";

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Inline spans: backtick code first (its contents are literal), then
/// `**bold**` in the remaining text.
fn render_inline(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('`') {
        match rest[open + 1..].find('`') {
            Some(len) => {
                out.push_str(&render_bold(&rest[..open]));
                out.push_str("<code>");
                out.push_str(&escape_html(&rest[open + 1..open + 1 + len]));
                out.push_str("</code>");
                rest = &rest[open + 1 + len + 1..];
            }
            None => break,
        }
    }
    out.push_str(&render_bold(rest));
    out
}

fn render_bold(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find("**") {
        match rest[open + 2..].find("**") {
            Some(len) if len > 0 => {
                out.push_str(&escape_html(&rest[..open]));
                out.push_str("<strong>");
                out.push_str(&escape_html(&rest[open + 2..open + 2 + len]));
                out.push_str("</strong>");
                rest = &rest[open + 2 + len + 2..];
            }
            _ => break,
        }
    }
    out.push_str(&escape_html(rest));
    out
}

fn split_row(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let t = t.strip_suffix('|').unwrap_or(t);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = t.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    cells.push(cur.trim().to_string());
    cells
}

fn is_separator_row(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('|')
        && split_row(t).iter().all(|c| {
            !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':')) && c.contains('-')
        })
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let level = line.chars().take_while(|&c| c == '#').count();
    if (1..=3).contains(&level) {
        line[level..].strip_prefix(' ').map(|t| (level, t.trim()))
    } else {
        None
    }
}

fn list_item(line: &str) -> Option<&str> {
    let t = line.trim_start();
    t.strip_prefix("- ").or_else(|| t.strip_prefix("* "))
}

/// Convert Markdown to an HTML body fragment.
pub fn render_fragment(md: &str) -> String {
    let lines: Vec<&str> = md.lines().collect();
    let mut out = String::new();
    let mut para: Vec<&str> = Vec::new();
    let flush = |para: &mut Vec<&str>, out: &mut String| {
        if !para.is_empty() {
            out.push_str("<p>");
            out.push_str(&render_inline(&para.join(" ")));
            out.push_str("</p>\n");
            para.clear();
        }
    };

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();

        if trimmed.is_empty() {
            flush(&mut para, &mut out);
            i += 1;
            continue;
        }

        if trimmed.starts_with("```") {
            flush(&mut para, &mut out);
            let lang = trimmed.trim_start_matches('`').trim();
            let mut body = Vec::new();
            i += 1;
            while i < lines.len() && !lines[i].trim().starts_with("```") {
                body.push(lines[i]);
                i += 1;
            }
            i += 1; // closing fence (or end of input)
            if lang.is_empty() {
                out.push_str("<pre><code>");
            } else {
                out.push_str(&format!("<pre><code class=\"language-{}\">", escape_html(lang)));
            }
            out.push_str(&escape_html(&body.join("\n")));
            out.push_str("</code></pre>\n");
            continue;
        }

        if let Some((level, text)) = heading(trimmed) {
            flush(&mut para, &mut out);
            out.push_str(&format!("<h{level}>{}</h{level}>\n", render_inline(text)));
            i += 1;
            continue;
        }

        if trimmed.starts_with('|') && i + 1 < lines.len() && is_separator_row(lines[i + 1]) {
            flush(&mut para, &mut out);
            let header = split_row(trimmed);
            out.push_str("<table>\n<thead><tr>");
            for h in &header {
                out.push_str(&format!("<th>{}</th>", render_inline(h)));
            }
            out.push_str("</tr></thead>\n<tbody>\n");
            i += 2;
            while i < lines.len() && lines[i].trim().starts_with('|') {
                out.push_str("<tr>");
                for cell in split_row(lines[i]) {
                    out.push_str(&format!("<td>{}</td>", render_inline(&cell)));
                }
                out.push_str("</tr>\n");
                i += 1;
            }
            out.push_str("</tbody>\n</table>\n");
            continue;
        }

        if list_item(line).is_some() {
            flush(&mut para, &mut out);
            out.push_str("<ul>\n");
            while let Some(item) = lines.get(i).and_then(|l| list_item(l)) {
                out.push_str(&format!("<li>{}</li>\n", render_inline(item.trim())));
                i += 1;
            }
            out.push_str("</ul>\n");
            continue;
        }

        para.push(trimmed);
        i += 1;
    }
    flush(&mut para, &mut out);
    out
}

/// Convert Markdown to a standalone HTML document with an embedded
/// stylesheet and no external references.
pub fn markdown_to_html(md: &str) -> String {
    let title = md
        .lines()
        .find_map(|l| heading(l.trim()).filter(|(lvl, _)| *lvl == 1).map(|(_, t)| t))
        .unwrap_or("Report");
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n\
         <title>{}</title>\n<style>{STYLESHEET}</style>\n</head>\n<body>\n{}</body>\n</html>\n",
        escape_html(&title.replace("**", "").replace('`', "")),
        render_fragment(md)
    )
}
