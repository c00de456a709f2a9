use super::graph::{NodeKind, PolicyGraph};

/// Node ids of the sample consent policy.
#[derive(Debug, Clone, Copy)]
pub struct SamplePolicyIds {
    pub user: &'static str,
    pub admin: &'static str,
    pub asset1: &'static str,
    pub asset2: &'static str,
    /// Carries the display name `DataAsset2` as well; ids keep them apart.
    pub asset3: &'static str,
    pub analytics: &'static str,
    pub policy_class: &'static str,
}

pub const SAMPLE_IDS: SamplePolicyIds = SamplePolicyIds {
    user: "u_john_doe",
    admin: "ua_admin",
    asset1: "o_asset1",
    asset2: "o_asset2",
    asset3: "o_asset3",
    analytics: "oa_analytics",
    policy_class: "pc_access",
};

/// A single policy class with two attribute hierarchies: data owners
/// (controller and processor) and consent agreements (marketing and
/// analytics). The admin attribute holds read and write on both owner
/// attributes, and the user is barred from reading anything under the
/// analytics agreement.
pub fn sample_policy() -> (PolicyGraph, SamplePolicyIds) {
    let mut g = PolicyGraph::new();
    let nodes = [
        ("u_john_doe", "John Doe", NodeKind::U),
        ("ua_admin", "OConsent Admin", NodeKind::UA),
        ("o_asset1", "DataAsset1", NodeKind::O),
        ("o_asset2", "DataAsset2", NodeKind::O),
        ("o_asset3", "DataAsset2", NodeKind::O),
        ("pc_access", "DataAsset Access OConsentPolicy", NodeKind::PC),
        ("oa_subjects", "DataSubjects", NodeKind::OA),
        ("oa_controller", "DataController", NodeKind::OA),
        ("oa_processor", "DataProcessor", NodeKind::OA),
        ("oa_agreements", "ConsentAgreements", NodeKind::OA),
        ("oa_marketing", "agreementMarketing", NodeKind::OA),
        ("oa_analytics", "agreementAnalytics", NodeKind::OA),
    ];
    for (id, name, kind) in nodes {
        g.create_node(id, name, kind).expect("fresh ids");
    }
    let assignments = [
        ("u_john_doe", "ua_admin"),
        ("oa_controller", "oa_subjects"),
        ("oa_processor", "oa_subjects"),
        ("o_asset1", "oa_controller"),
        ("o_asset2", "oa_processor"),
        ("o_asset3", "oa_processor"),
        ("oa_marketing", "oa_agreements"),
        ("oa_analytics", "oa_agreements"),
        ("o_asset1", "oa_marketing"),
        ("o_asset2", "oa_marketing"),
        ("o_asset3", "oa_analytics"),
        ("oa_subjects", "pc_access"),
        ("oa_agreements", "pc_access"),
    ];
    for (c, p) in assignments {
        g.assign(c, p).expect("legal assignment");
    }
    g.associate("ua_admin", ["r", "w"], "oa_controller").expect("legal association");
    g.associate("ua_admin", ["r", "w"], "oa_processor").expect("legal association");
    g.add_prohibition("u_john_doe", ["r"], "oa_analytics").expect("legal prohibition");
    (g, SAMPLE_IDS)
}
