//! Fixtures shared by the integration tests: the five-backend mock rule
//! table, its stories and issues, and store helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use cruise_core::clock::{Clock, FixedClock};
use cruise_core::ingest::{IssueState, RawIssue};
use cruise_core::llm::{Backend, MockRule, MockTransport, Placeholder, PromptKind};
use cruise_core::pipeline::{Language, Pipeline, UserStory, ASSESS_REASK, GENERATE_REASK, MATCH_REASK};
use cruise_core::preprocess::Preprocessor;
use cruise_core::store::{Store, StoreOptions};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap()
}

pub fn fixed_clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock(t0()))
}

pub fn fast_options() -> StoreOptions {
    StoreOptions {
        durable: false,
        crash_at_write: None,
    }
}

pub fn raw_issue(tracker: &str, id: &str, title: &str, body: &str) -> RawIssue {
    RawIssue {
        id: id.into(),
        tracker: tracker.into(),
        url: format!("https://tracker.example/{tracker}/issues/{id}"),
        title: title.into(),
        body: body.into(),
        labels: Default::default(),
        state: IssueState::Closed,
        created_at: Utc.with_ymd_and_hms(2023, 5, 1, 9, 0, 0).unwrap(),
        fetched_at: t0(),
    }
}

/// (id, title, body); every body survives preprocessing unchanged.
pub const E2E_ISSUES: [(&str, &str, &str); 20] = [
    ("I01", "Cart total not updated", "The cart total is not updated after the quantity of an item is changed."),
    ("I02", "Cart loses items after login", "Items in the cart disappear when the customer logs in on another device."),
    ("I03", "Payment method change", "After the payment method is changed the order confirmation is not sent to the customer."),
    ("I04", "Refund status missing", "The refund of an order is not shown in the customer account."),
    ("I05", "Crash on order export", "The admin crashes when an order export is started with many rows."),
    ("I06", "Typo in footer", "There is a typo in the footer text of the shop."),
    ("I07", "Search ignores umlauts", "The search does not find products when the query contains umlauts."),
    ("I08", "Wishlist sorting", "The wishlist should be sortable by price and by name."),
    ("I09", "Vague request about cart", "Something about the cart feels vague and it should be better."),
    ("I10", "Flaky voucher", "Vouchers are flaky at checkout and are sometimes rejected for the order."),
    ("I11", "Invoice number format", "The invoice number should contain the year of the order."),
    ("I12", "Guest checkout email", "A guest does not receive an email after the payment is completed."),
    ("I13", "Mumble about shipping", "Shipping costs mumble mumble when the cart is heavy."),
    ("I14", "Hesitant tax display", "Tax is shown hesitant in the cart summary for foreign customers."),
    ("I15", "Newsletter opt-in", "The newsletter opt-in checkbox is not saved in the profile."),
    ("I16", "Refund via payment provider", "A refund through the payment provider is not reflected in the shop."),
    ("I17", "Product images slow", "Product images load slowly on the category page."),
    ("I18", "Order crash on mobile", "The order page crashes on mobile devices with small screens."),
    ("I19", "Typo in cart button", "There is a typo on the add to cart button."),
    ("I20", "Stock after order", "The stock is not reduced after an order is placed."),
];

pub fn e2e_stories() -> Vec<UserStory> {
    let s = |id: &str, text: &str, criteria: &[&str]| {
        UserStory::new(id, "shop", text, criteria.iter().map(|c| c.to_string()).collect(), Language::English).unwrap()
    };
    vec![
        s("S1", "As a shopper I want my cart to keep its items so that I can buy them later.", &[]),
        s(
            "S2",
            "As a guest I want to check out without an account so that I can order quickly.",
            &["A guest can enter an email address"],
        ),
        s(
            "S3",
            "As a customer I want to pay with different payment methods so that I can choose my favourite provider.",
            &[],
        ),
        s(
            "S4",
            "As a logged-in user I can view and sort my favorite products.",
            &[
                "Clicking on \"Title A-Z\" sorts the titles alphabetically from A to Z",
                "Clicking on \"Title Z-A\" sorts the titles alphabetically from Z to A",
            ],
        ),
        s(
            "S5",
            "As a shop owner I want orders to be exported so that accounting can process them.",
            &["Exports are CSV files"],
        ),
    ]
}

pub const VALID_SCENARIO: &str = "Scenario: Criterion from issue\n\
GIVEN a customer in the shop\n\
WHEN the described situation occurs\n\
THEN the expected behaviour is shown";

pub const RECOVERED_SCENARIO: &str = "Scenario: Recovered after re-ask\n\
GIVEN a shop\n\
WHEN the issue occurs\n\
THEN the story still holds";

fn m(kind: PromptKind, field: Placeholder, needle: &str, reply: &str) -> MockRule {
    MockRule::reply(reply).for_kind(kind).when_contains(field, needle)
}

/// The rule table. Matching: m1..m5 each vote; ties are impossible with
/// five voters. m1 also generates, m2 also assesses.
///
/// | backend | rules, first hit wins |
/// |---|---|
/// | m1 match | issue ∋ cart → yes; issue ∋ payment → yes; else no |
/// | m2 match | story ∋ guest → no; issue ∋ cart → yes; issue ∋ order → yes; else no |
/// | m3 match | issue ∋ crash → no; issue ∋ order → yes; story ∋ cart → yes; else no |
/// | m4 match | issue ∋ typo → no; else yes |
/// | m5 match | re-ask → yes; issue ∋ refund → unparseable; issue ∋ cart → yes; else no |
/// | m1 generate | issue ∋ vague → chatter; re-ask → scenario; issue ∋ flaky → chatter; else scenario |
/// | m2 assess | issue ∋ mumble → unlabeled; criteria = none → relevant; re-ask → irrelevant; issue ∋ hesitant → unlabeled; criteria ∋ alphabetically → irrelevant; else relevant |
pub fn e2e_mocks() -> [MockTransport; 5] {
    use Placeholder::{AcceptanceCriteria, Issue, UserStory as Story};
    use PromptKind::{Assess, Generate, Match};
    let m1 = MockTransport::new(
        vec![
            m(Match, Issue, "cart", "yes"),
            m(Match, Issue, "payment", "Yes."),
            m(Generate, Issue, "vague", "I'm sorry, the issue is too vague to derive a scenario."),
            MockRule::reply(RECOVERED_SCENARIO).for_kind(Generate).when_contains_prompt(GENERATE_REASK),
            m(Generate, Issue, "flaky", "Here is my analysis of the voucher problem."),
            MockRule::reply(VALID_SCENARIO).for_kind(Generate),
        ],
        "no",
    );
    let m2 = MockTransport::new(
        vec![
            m(Match, Story, "guest", "no"),
            m(Match, Issue, "cart", "yes"),
            m(Match, Issue, "order", "yes"),
            m(Assess, Issue, "mumble", "I cannot decide."),
            MockRule::reply("relevant\nNo criteria exist yet.").for_kind(Assess).when_equals(AcceptanceCriteria, "none"),
            MockRule::reply("LABEL: irrelevant\nNothing new.").for_kind(Assess).when_contains_prompt(ASSESS_REASK),
            m(Assess, Issue, "hesitant", "Hard to say."),
            m(Assess, AcceptanceCriteria, "alphabetically", "irrelevant — alphabetical sorting is already required"),
            MockRule::reply("LABEL: relevant\nAdds an edge case.").for_kind(Assess),
        ],
        "no",
    );
    let m3 = MockTransport::new(
        vec![
            m(Match, Issue, "crash", "no"),
            m(Match, Issue, "order", "yes"),
            m(Match, Story, "cart", "yes"),
        ],
        "No",
    );
    let m4 = MockTransport::new(vec![m(Match, Issue, "typo", "no")], "yes");
    let m5 = MockTransport::new(
        vec![
            MockRule::reply("yes").for_kind(Match).when_contains_prompt(MATCH_REASK),
            m(Match, Issue, "refund", "I am not sure about this one"),
            m(Match, Issue, "cart", "YES"),
        ],
        "no",
    );
    [m1, m2, m3, m4, m5]
}

/// Hand-simulated outcome of the rule table over all 5 × 20 pairs.
pub struct Expected {
    pub matches: usize,
    pub generated: usize,
    pub malformed: usize,
    pub relevant: usize,
    pub irrelevant: usize,
    pub unparsed_assessments: usize,
    /// story → (matches, generated, malformed, relevant)
    pub per_story: [(&'static str, usize, usize, usize, usize); 5],
    /// backend → transport calls
    pub calls: [(&'static str, u64); 5],
}

pub const EXPECTED: Expected = Expected {
    matches: 57,
    generated: 52,
    malformed: 5,
    relevant: 35,
    irrelevant: 17,
    unparsed_assessments: 5,
    per_story: [
        ("S1", 13, 12, 1, 11),
        ("S2", 8, 7, 1, 5),
        ("S3", 12, 11, 1, 10),
        ("S4", 12, 11, 1, 0),
        ("S5", 12, 11, 1, 9),
    ],
    calls: [("m1", 166), ("m2", 160), ("m3", 100), ("m4", 100), ("m5", 110)],
};

pub struct Ensemble {
    pub matchers: Vec<Arc<Backend>>,
    pub generator: Arc<Backend>,
    pub assessor: Arc<Backend>,
}

impl Ensemble {
    pub fn new() -> Self {
        let backends: Vec<Arc<Backend>> = e2e_mocks()
            .into_iter()
            .enumerate()
            .map(|(i, t)| Arc::new(Backend::mock(format!("m{}", i + 1), t)))
            .collect();
        Ensemble {
            generator: backends[0].clone(),
            assessor: backends[1].clone(),
            matchers: backends,
        }
    }

    pub fn pipeline(&self, store: Arc<Store>) -> Pipeline {
        Pipeline::new(
            store,
            self.matchers.clone(),
            self.generator.clone(),
            self.assessor.clone(),
            "e-commerce web shop",
            fixed_clock(),
        )
        .unwrap()
    }

    pub fn calls(&self) -> BTreeMap<String, u64> {
        self.matchers.iter().map(|b| (b.name().to_string(), b.calls())).collect()
    }
}

/// Raw issues, preprocessing and stories for the end-to-end fixture.
pub async fn seed_e2e(root: &Path) -> Store {
    seed_subset(root, None, None).await
}

/// Like [`seed_e2e`] restricted to the given story and issue ids.
pub async fn seed_subset(root: &Path, stories: Option<&[&str]>, issues: Option<&[&str]>) -> Store {
    let store = Store::open_with(root, fast_options()).unwrap();
    let mut n = 0;
    for (id, title, body) in E2E_ISSUES {
        if issues.is_none_or(|ids| ids.contains(&id)) {
            store.put(&raw_issue("shop", id, title, body)).unwrap();
            n += 1;
        }
    }
    let summary = Preprocessor::default().run(&store).await.unwrap();
    assert_eq!(summary["shop"].remaining, n, "fixture issues must all survive preprocessing");
    for s in e2e_stories() {
        if stories.is_none_or(|ids| ids.contains(&s.id.as_str())) {
            store.put(&s).unwrap();
        }
    }
    store.compact().unwrap();
    store
}

/// File name → bytes for every file under the store root.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

pub fn fixture_path(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Compares `actual` with a checked-in golden file; `CRUISE_BLESS=1`
/// rewrites the golden instead.
pub fn check_golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = fixture_path(rel);
    if std::env::var_os("CRUISE_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs:\n--- expected\n{expected}\n--- actual\n{actual}", path.display()))
    }
}

pub const SHOPWARE_TITLE: &str = "No order confirmation when changing the payment method";

/// The sentences marked as the business requirement in the sample issue.
pub const SHOPWARE_REQUIREMENT: [&str; 5] = [
    "If an order is placed and e.g. Paypal is selected,",
    "you will receive an order confirmation",
    "if you cancel the payment and want to complete the order",
    "with a new payment method in the customer account",
    "New order confirmation with the correct payment method",
];

/// Text that must not survive: section headings and bodies, code.
pub const SHOPWARE_NOISE: [&str; 8] = [
    "Steps to reproduce",
    "Create a trigger in the Flow Builder",
    "Cancel order",
    "eventDispatcher",
    "OrderPaymentMethodChangedEvent",
    "Current result",
    "Mail is not generated because the ISO code is missing",
    "Shopware 6.4.9.0",
];

pub fn shopware_issue() -> RawIssue {
    let body = std::fs::read_to_string(fixture_path("preprocess/shopware_next_20948.md")).unwrap();
    raw_issue("shopware", "NEXT-20948", SHOPWARE_TITLE, &body)
}

/// Checks the cleaned sample issue against both goldens and the sentence lists.
pub async fn shopware_check() -> Result<(), String> {
    let issue = shopware_issue();
    let (stripped, _) = cruise_core::preprocess::strip_markdown(&issue.body);
    check_golden("preprocess/shopware_next_20948.stripped.txt", &format!("{stripped}\n"))?;
    let out = Preprocessor::default().preprocess_issue(&issue).await.map_err(|e| e.to_string())?;
    if out.dropped {
        return Err(format!("sample issue dropped: {:?}", out.drop_reason));
    }
    check_golden("preprocess/shopware_next_20948.golden.txt", &format!("{}\n", out.text))?;
    if let Some(s) = SHOPWARE_REQUIREMENT.iter().find(|s| !out.text.contains(**s)) {
        return Err(format!("lost requirement sentence {s:?}"));
    }
    if let Some(s) = SHOPWARE_NOISE.iter().find(|s| out.text.contains(**s)) {
        return Err(format!("kept noise {s:?}"));
    }
    Ok(())
}

pub const SIMPLE_SEARCH: &str = "Scenario: Simple search\n\
GIVEN a web browser is on a search engine's page\n\
WHEN the search phrase \"cake\" is entered\n\
THEN results for \"cake\" are shown\n";

pub const SESSION_EXPIRY: &str = "Scenario: Ensure session expires in other browsers after password reset\n\
GIVEN I am logged in on Browser A\n\
WHEN I change my password on Browser B\n\
THEN I should be prompted to log in again on Browser A with the new password\n";

pub mod strategies {
    use cruise_core::gherkin::GherkinScenario;
    use proptest::prelude::*;

    pub fn text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9äöüéß][A-Za-z0-9äöüéß ,.'\"()/-]{0,48}[A-Za-z0-9äöüéß.\")]"
    }

    fn steps() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(text(), 1..4)
    }

    pub fn scenario() -> impl Strategy<Value = GherkinScenario> {
        (text(), steps(), steps(), steps()).prop_map(|(title, given, when, then)| GherkinScenario { title, given, when, then })
    }

    /// Two-rater tables with equal marginals for both raters.
    pub fn balanced_pair() -> impl Strategy<Value = Vec<Vec<Option<bool>>>> {
        (1..60usize).prop_flat_map(|half| {
            let n = 2 * half;
            let column = Just((0..n).map(|i| i < half).collect::<Vec<bool>>()).prop_shuffle();
            (column.clone(), column).prop_map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| vec![Some(x), Some(y)]).collect())
        })
    }

    /// 2–5 raters, up to 40 items, about one cell in seven missing.
    pub fn sparse_matrix() -> impl Strategy<Value = Vec<Vec<Option<bool>>>> {
        (2..6usize, 1..40usize).prop_flat_map(|(raters, items)| {
            prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, any::<bool>()), raters), items)
        })
    }
}

pub fn annotation_matrix(rows: &[Vec<Option<bool>>]) -> cruise_core::metrics::AnnotationMatrix {
    use cruise_core::metrics::Verdict;
    let raters = rows.first().map_or(0, Vec::len);
    cruise_core::metrics::AnnotationMatrix::new(
        (0..rows.len()).map(|i| format!("i{i}")).collect(),
        (0..raters).map(|r| format!("r{r}")).collect(),
        rows.iter()
            .map(|row| row.iter().map(|c| c.map(|a| if a { Verdict::Approved } else { Verdict::Declined })).collect())
            .collect(),
    )
    .unwrap()
}

const LABELS: [&str; 8] = ["bug", "Duplicate", "ui", " invalid ", "Needs Update", "feature", "cannot reproduce", "test"];

/// Issue numbers whose record is a pull request by URL or by sentinel body.
pub fn is_pr_number(n: u64) -> bool {
    n % 11 == 3 || n % 11 == 7
}

/// Mixed tracker corpus: open and closed issues, excluded labels, pull
/// requests and one record the decoder must skip.
pub fn ingest_corpus() -> Vec<serde_json::Value> {
    use serde_json::json;
    let mut out = Vec::new();
    for n in 1..=47u64 {
        let state = if n % 5 == 0 { "open" } else { "closed" };
        let labels: Vec<serde_json::Value> = (0..(n % 3))
            .map(|k| json!({ "name": LABELS[((n + k) % LABELS.len() as u64) as usize] }))
            .collect();
        let (url, body) = match n % 11 {
            3 => (format!("https://github.com/o/r/pull/{n}"), "The order total must include the VAT of the country.".to_string()),
            7 => (format!("https://github.com/o/r/issues/{n}"), format!("{} #{}", cruise_core::preprocess::PR_SENTINEL, n + 100)),
            _ => (format!("https://github.com/o/r/issues/{n}"), format!("The order number {n} is not shown in the customer account.")),
        };
        out.push(json!({
            "number": n, "title": format!("Issue {n}"), "body": body, "labels": labels,
            "state": state, "created_at": "2022-04-01T08:00:00Z", "html_url": url,
        }));
    }
    out.push(json!({ "title": "broken", "state": "closed", "created_at": "2022-04-01T08:00:00Z", "html_url": "x" }));
    out
}

/// The oracle: decode every corpus record by hand and apply the default filter.
pub fn ingest_expected(corpus: &[serde_json::Value], tracker: &str) -> std::collections::BTreeSet<String> {
    use cruise_core::ingest::{is_excluded, HarvestFilter};
    let filter = HarvestFilter::default();
    corpus
        .iter()
        .filter_map(|v| {
            let number = v.get("number")?.as_u64()?;
            let issue = RawIssue {
                id: number.to_string(),
                tracker: tracker.into(),
                url: v["html_url"].as_str()?.into(),
                title: String::new(),
                body: String::new(),
                labels: v["labels"].as_array()?.iter().map(|l| l["name"].as_str().unwrap().to_string()).collect(),
                state: if v["state"] == "open" { IssueState::Open } else { IssueState::Closed },
                created_at: t0(),
                fetched_at: t0(),
            };
            (!is_excluded(&issue, &filter)).then(|| format!("{tracker}:{number}"))
        })
        .collect()
}

/// Serves `tracker` on an ephemeral local port and returns its base URL.
pub async fn spawn_tracker(tracker: &cruise_core::ingest::FixtureTracker) -> String {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = tracker.router();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}
