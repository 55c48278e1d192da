use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Attachment, StaticEdgeKind, UnifiedSnapshot, Verb};

pub const DEFAULT_SYSTEM_CONTEXT: &str = "You are a mobile manipulator operating inside a building. \
Use the scene graph below to decide what to do. Reply with numbered steps, one per line, each of \
the form `<skill> <object> in <region>` using only the listed skills. If nothing needs doing, \
reply without any steps.";

/// The skill templates offered to the model by default.
pub fn default_skills() -> Vec<String> {
    [Verb::Navigate, Verb::Pick, Verb::Place]
        .iter()
        .map(|v| format!("{} {{object}} in {{region}}", v.phrase()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_context: String,
    pub scene_structure: String,
    pub ongoing_relations: String,
    pub optional_skills: String,
    pub rendered: String,
    pub snapshot_tick: u64,
}

/// Seconds with one decimal, as used in relation lines.
fn secs(t: f64) -> String {
    format!("{t:.1}")
}

fn scene_structure(snapshot: &UnifiedSnapshot) -> String {
    let base = snapshot.base();
    let name_of = |id: &str| base.region(id).map_or(id.to_string(), |r| r.name.clone());
    let mut lines =
        vec![format!("Regions: {}", base.regions.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", "))];
    let conn: Vec<String> = base
        .static_edges
        .iter()
        .filter(|e| e.kind == StaticEdgeKind::Connectivity)
        .map(|e| format!("{} <-> {}", name_of(&e.a), name_of(&e.b)))
        .collect();
    lines.push(format!("Connections: {}", if conn.is_empty() { "none".to_string() } else { conn.join(", ") }));
    lines.push("Objects:".to_string());
    let mut objects: Vec<(String, String, String)> =
        base.static_objects.iter().map(|o| (o.region_id.clone(), o.id.clone(), o.class_label.clone())).collect();
    // anchored dynamic objects; merged ones are already covered by their
    // static vertex
    let mut seen = BTreeSet::new();
    for (cam, track, att) in snapshot.attachments() {
        if let Attachment::Anchored { region_id } = att {
            let label = snapshot
                .anchored()
                .iter()
                .find(|a| a.subgraph.camera_id == cam)
                .and_then(|a| a.subgraph.vertex(track))
                .map(|v| v.class_label.clone())
                .unwrap_or_default();
            if seen.insert((region_id.clone(), label.clone())) {
                objects.push((region_id, format!("~{cam}/{track:010}"), label));
            }
        }
    }
    objects.sort();
    for (region, _, label) in objects {
        lines.push(format!("- {label} in {}", name_of(&region)));
    }
    lines.join("\n")
}

fn ongoing_relations(snapshot: &UnifiedSnapshot) -> String {
    let mut subs: Vec<_> = snapshot.anchored().iter().map(|a| &a.subgraph).collect();
    subs.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
    let mut lines = Vec::new();
    for sub in subs {
        let mut edges: Vec<_> = sub.edges.iter().collect();
        edges.sort_by(|a, b| (a.subject_id, a.object_id, &a.predicate).cmp(&(b.subject_id, b.object_id, &b.predicate)));
        for e in edges {
            for s in &e.spans {
                lines.push(format!(
                    "{} {} {} ({}\u{2013}{})",
                    e.subject_class,
                    e.predicate,
                    e.object_class,
                    secs(s.start),
                    secs(s.end)
                ));
            }
        }
    }
    if lines.is_empty() {
        "none".to_string()
    } else {
        lines.join("\n")
    }
}

/// Text form of a snapshot for the planner model: system context, scene
/// structure, ongoing relations and the offered skills, in that order.
pub fn render_prompt(snapshot: &UnifiedSnapshot, skills: &[String], system_context: &str) -> PromptBundle {
    let scene_structure = scene_structure(snapshot);
    let ongoing_relations = ongoing_relations(snapshot);
    let optional_skills = skills.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n");
    let rendered = format!(
        "{system_context}\n\nScene structures:\n{scene_structure}\n\nOngoing relations:\n{ongoing_relations}\n\nOptional skills:\n{optional_skills}\n"
    );
    PromptBundle {
        system_context: system_context.to_string(),
        scene_structure,
        ongoing_relations,
        optional_skills,
        rendered,
        snapshot_tick: snapshot.tick(),
    }
}
