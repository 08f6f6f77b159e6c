mod common;

use chrono::{DateTime, TimeDelta, Utc};
use common::{Route, SimServer};
use degentweb::crawl::{CrawlPolicy, Crawler, DirectoryTransport, HostScheduler, StopReason, VirtualClock};
use degentweb::pipeline::{filter_records, FilterConfig};
use degentweb::quality::HeuristicTokenCounter;
use degentweb::scorer::LabelHint;
use degentweb::sitegen::{mock_site, write_site};
use url::Url;

const PAGE: &str = "<html><body><p>hello</p></body></html>";

fn start() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
}

fn candidates(host: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("https://{host}/p/{i}")).collect()
}

#[test]
fn requests_to_one_host_are_spaced_sixty_seconds() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler.crawl_site("a.example", &candidates("a.example", 30), &|_| false).unwrap();
    assert_eq!(pages.len(), 30);
    assert_eq!(stats.requests_made, 31);
    let log = server.log();
    let gaps: Vec<TimeDelta> = log.windows(2).map(|w| w[1].0 - w[0].0).collect();
    assert_eq!(gaps.iter().min().copied(), Some(TimeDelta::seconds(60)));
    assert!(log.iter().all(|(_, _, ua)| ua == &policy.user_agent));
}

#[test]
fn concurrent_sites_keep_per_host_spacing() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let sites: Vec<(String, Vec<String>)> = ["a.example", "b.example", "c.example"]
        .iter()
        .map(|h| (h.to_string(), candidates(h, 10)))
        .collect();
    for r in crawler.crawl_sites(&sites, &|_| false) {
        r.unwrap();
    }
    let log = server.log();
    assert_eq!(log.len(), 33);
    for (host, _) in &sites {
        let mut times: Vec<DateTime<Utc>> = log
            .iter()
            .filter(|(_, u, _)| Url::parse(u).unwrap().host_str() == Some(host))
            .map(|(t, _, _)| *t)
            .collect();
        times.sort();
        assert!(times.windows(2).all(|w| w[1] - w[0] >= TimeDelta::seconds(60)), "{host}");
    }
}

#[test]
fn disallowed_paths_are_never_requested() {
    let robots = "User-agent: *\nDisallow: /\n\nUser-agent: degentweb-crawler\nDisallow: /private/\nAllow: /private/open\n";
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE))
        .route("/robots.txt", Route::Page(200, robots))
        .route("/moved", Route::Redirect("/private/secret"));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let urls: Vec<String> = ["/a", "/private/x", "/private/open", "/b", "/private/y/z", "/moved"]
        .iter()
        .map(|p| format!("https://a.example{p}"))
        .collect();
    let (pages, stats) = crawler.crawl_site("a.example", &urls, &|_| false).unwrap();
    let requested: Vec<String> = server.log().iter().map(|(_, u, _)| Url::parse(u).unwrap().path().to_string()).collect();
    assert_eq!(requested, ["/robots.txt", "/a", "/private/open", "/b", "/moved"]);
    assert_eq!(stats.robots_denied, 3);
    assert_eq!(pages.len(), 3);
}

#[test]
fn missing_robots_allows_everything() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE)).route("/robots.txt", Route::Page(404, ""));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler.crawl_site("a.example", &candidates("a.example", 4), &|_| false).unwrap();
    assert_eq!(pages.len(), 4);
    assert!(stats.robots_warning.is_none());
}

#[test]
fn stops_after_exactly_three_consecutive_errors() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Fail).route("/robots.txt", Route::Page(200, ""));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler.crawl_site("a.example", &candidates("a.example", 50), &|_| false).unwrap();
    assert!(pages.is_empty());
    assert_eq!(stats.errors, 3);
    assert_eq!(stats.requests_made, 4);
    assert_eq!(stats.stopped_reason, StopReason::ErrorStop);
}

#[test]
fn a_success_resets_the_error_run() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Fail)
        .route("/robots.txt", Route::Page(200, ""))
        .route("/p/2", Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (_, stats) = crawler.crawl_site("a.example", &candidates("a.example", 50), &|_| false).unwrap();
    // p/0, p/1 fail, p/2 succeeds, then p/3..p/5 fail.
    assert_eq!(stats.errors, 5);
    assert_eq!(stats.requests_made, 7);
    assert_eq!(stats.stopped_reason, StopReason::ErrorStop);
}

#[test]
fn visit_cap_is_340_requests() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler.crawl_site("a.example", &candidates("a.example", 1000), &|_| false).unwrap();
    assert_eq!(server.log().len(), 340);
    assert_eq!(stats.requests_made, 340);
    assert_eq!(pages.len(), 339);
    assert_eq!(stats.stopped_reason, StopReason::VisitCap);
}

#[test]
fn target_met_stops_early() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler.crawl_site("a.example", &candidates("a.example", 100), &|_| true).unwrap();
    assert_eq!(pages.len(), 15);
    assert_eq!(stats.stopped_reason, StopReason::TargetMet);
}

#[test]
fn cross_host_redirects_are_recorded_not_followed() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE)).route("/out", Route::Redirect("https://elsewhere.example/x"));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    let (pages, stats) = crawler
        .crawl_site("a.example", &["https://a.example/out".to_string()], &|_| false)
        .unwrap();
    assert!(pages.is_empty());
    assert_eq!(stats.cross_host_redirects, ["https://elsewhere.example/x"]);
    assert!(server.log().iter().all(|(_, u, _)| u.starts_with("https://a.example/")));
}

#[test]
fn off_site_candidates_are_rejected() {
    let clock = VirtualClock::new(start());
    let server = SimServer::new(&clock, Route::Page(200, PAGE));
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &server, clock: &clock, scheduler: &scheduler };
    assert!(crawler
        .crawl_site("a.example", &["https://b.example/".to_string()], &|_| false)
        .is_err());
    assert!(server.log().is_empty());
}

#[test]
fn generated_site_crawls_into_compliant_pages() {
    let dir = tempfile::tempdir().unwrap();
    let host = "gen.example";
    let (plan, pages) = mock_site(host, 5, LabelHint::Human).unwrap();
    write_site(&dir.path().join(host), host, &pages).unwrap();
    let clock = VirtualClock::new(start());
    let transport = DirectoryTransport::new(dir.path());
    let policy = CrawlPolicy::default();
    let scheduler = HostScheduler::new();
    let crawler = Crawler { policy: &policy, transport: &transport, clock: &clock, scheduler: &scheduler };
    let urls: Vec<String> = plan.pages.iter().map(|p| format!("https://{host}{}", p.slug)).collect();
    let (records, stats) = crawler.crawl_site(host, &urls, &|_| true).unwrap();
    assert_eq!(stats.stopped_reason, StopReason::TargetMet);
    assert_eq!(records.len(), 15);
    let (filtered, summary) = filter_records(records, &FilterConfig::default(), &HeuristicTokenCounter).unwrap();
    assert_eq!(summary[0].compliant, 15);
    assert!(filtered.iter().all(|p| p.extracted_text.is_some()));
}
