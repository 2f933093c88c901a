use proptest::prelude::*;
use taskgraph::bt::{parse_xml, serialize, validate_structure, NodeKind, Params, Severity, TaskGraph, Tree};

fn arb_value() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            4 => prop::char::range('a', 'z'),
            1 => prop::sample::select(vec!['&', '<', '>', '"', '\'', ' ', '\t', '\n', '\r', '=', ';', '/', 'é', '→', '0', '.']),
        ],
        0..12,
    )
    .prop_map(|cs| cs.into_iter().collect())
}

fn arb_key() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_.-]{0,7}".prop_filter("reserved", |k| k != "name" && k != "num_attempts")
}

fn arb_name() -> impl Strategy<Value = String> {
    "[A-Z][A-Za-z0-9_]{0,10}"
}

fn arb_leaf() -> impl Strategy<Value = Tree> {
    (
        any::<bool>(),
        arb_name(),
        prop::collection::btree_map(arb_key(), arb_value(), 0..4),
    )
        .prop_map(|(action, name, params)| {
            let params: Params = params.into_iter().collect();
            let kind = if action {
                NodeKind::Action { behavior: name, params }
            } else {
                NodeKind::Condition {
                    condition: name,
                    params,
                }
            };
            Tree {
                kind,
                children: Vec::new(),
            }
        })
}

fn arb_tree() -> impl Strategy<Value = Tree> {
    arb_leaf().prop_recursive(4, 48, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..5).prop_map(Tree::sequence),
            prop::collection::vec(inner.clone(), 1..5).prop_map(Tree::fallback),
            (1u32..10, inner).prop_map(|(k, c)| Tree::retry(k, c)),
        ]
    })
}

fn arb_graph() -> impl Strategy<Value = TaskGraph> {
    (arb_value(), arb_tree()).prop_map(|(name, tree)| TaskGraph::new(name, tree))
}

/// Independent attribute escaping for hand-written documents.
fn esc(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '&' => "&amp;".to_string(),
            '<' => "&lt;".to_string(),
            '"' => "&quot;".to_string(),
            '\t' => "&#x9;".to_string(),
            '\n' => "&#xA;".to_string(),
            '\r' => "&#xD;".to_string(),
            c => c.to_string(),
        })
        .collect()
}

/// Writes `tree` with each leaf's attributes rotated by `rot` and loose whitespace.
fn write_permuted(tree: &Tree, rot: usize, out: &mut String) {
    match &tree.kind {
        NodeKind::Action { behavior: n, params } | NodeKind::Condition { condition: n, params } => {
            let el = tree.kind.element();
            let mut attrs: Vec<(String, String)> = vec![("name".into(), n.clone())];
            attrs.extend(params.iter().map(|(k, v)| (k.to_string(), v.to_string())));
            let len = attrs.len();
            attrs.rotate_left(rot % len);
            attrs.reverse();
            out.push_str(&format!("<{el}"));
            for (k, v) in attrs {
                out.push_str(&format!("\n   {k} = '{}'", esc(&v).replace('\'', "&apos;")));
            }
            out.push_str(" />\n");
        }
        kind => {
            let el = kind.element();
            match kind {
                NodeKind::Retry { max_attempts } => {
                    out.push_str(&format!("<{el}  num_attempts=\" {max_attempts} \">\n"))
                }
                _ => out.push_str(&format!("<{el}>\n")),
            }
            for c in &tree.children {
                write_permuted(c, rot + 1, out);
            }
            out.push_str(&format!("</{el} >\n"));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn serialize_then_parse_is_identity(graph in arb_graph()) {
        prop_assert!(validate_structure(&graph).iter().all(|i| i.severity != Severity::Error));
        let text = serialize(&graph).expect("serialize");
        let back = parse_xml(&text).expect("parse");
        prop_assert_eq!(&back, &graph);
        prop_assert_eq!(serialize(&back).unwrap(), text);
    }

    #[test]
    fn attribute_order_and_whitespace_do_not_change_output(graph in arb_graph(), rot in 0usize..5) {
        let mut doc = format!("<?xml version=\"1.0\"?>\n<TaskGraph name=\"{}\">\n", esc(&graph.name));
        write_permuted(&graph.to_tree().unwrap(), rot, &mut doc);
        doc.push_str("</TaskGraph>");
        let parsed = parse_xml(&doc).expect("parse permuted");
        prop_assert_eq!(serialize(&parsed).unwrap(), serialize(&graph).unwrap());
    }
}

#[test]
fn canonical_form_of_a_small_graph() {
    let graph = TaskGraph::new(
        "demo",
        Tree::sequence(vec![
            Tree::condition("ObjectVisible").param("target", "mug"),
            Tree::retry(3, Tree::action("Grasp").param("target", "mug")),
            Tree::action("Place").param("z", "0.8").param("x", "1").param("y", "0"),
        ]),
    );
    let want = "<TaskGraph name=\"demo\">\n  <Sequence>\n    <Condition name=\"ObjectVisible\" target=\"mug\"/>\n    <Retry num_attempts=\"3\">\n      <Action name=\"Grasp\" target=\"mug\"/>\n    </Retry>\n    <Action name=\"Place\" x=\"1\" y=\"0\" z=\"0.8\"/>\n  </Sequence>\n</TaskGraph>\n";
    assert_eq!(serialize(&graph).unwrap(), want);
}
