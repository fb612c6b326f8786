use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use stegokey_api::{
    BatchRequest, EmbedRequest, EmbedResponse, ErrorBody, ExtractRequest, ExtractResponse, InspectRequest, KeyListing,
    PayloadDto, PeerMessageRequest, PeerOpenRequest, SealedMessage, Status, WavInfo,
};
use stegokey_core::config::fixtures;
use stegokey_core::hierarchy::{ClassId, MembershipEvent, RekeyEntry, RekeyLog};
use stegokey_core::payload::PayloadKind;
use stegokey_core::poly_keys::{ClassKey, UserKey};
use stegokey_core::stego_wav::WavAudio;
use stegokey_core::Authority;
use stegokey_service::{router, AppState};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get<T: DeserializeOwned>(app: &Router, uri: &str) -> Result<T, (StatusCode, ErrorBody)> {
    decode(call(app, Method::GET, uri, None).await)
}

async fn post<T: DeserializeOwned>(app: &Router, uri: &str, body: &impl Serialize) -> Result<T, (StatusCode, ErrorBody)> {
    decode(call(app, Method::POST, uri, Some(serde_json::to_vec(body).unwrap())).await)
}

fn decode<T: DeserializeOwned>((status, bytes): (StatusCode, Vec<u8>)) -> Result<T, (StatusCode, ErrorBody)> {
    if status.is_success() {
        Ok(serde_json::from_slice(&bytes).unwrap())
    } else {
        Err((status, serde_json::from_slice(&bytes).unwrap()))
    }
}

fn cover_bytes(frames: usize) -> Vec<u8> {
    let samples = (0..2)
        .map(|ch| (0..frames).map(|i| ((i * 7919 + ch * 104729) % 65536) as u16 as i16).collect())
        .collect();
    WavAudio::from_samples(11025, samples).unwrap().to_bytes()
}

fn text(body: &str) -> PayloadDto {
    PayloadDto { kind: PayloadKind::Text, name: "note.txt".into(), body: body.as_bytes().to_vec() }
}

#[tokio::test]
async fn keys_match_the_library() {
    let app = router(AppState::new(fixtures::nine_class()));
    let ca = Authority::new(fixtures::nine_class());

    let status: Status = get(&app, "/v1/status").await.unwrap();
    assert_eq!((status.epoch, status.t, status.m, status.classes.len()), (0, 2, 7, 9));

    let k: ClassKey = get(&app, "/v1/classes/C7/key").await.unwrap();
    assert_eq!(k, ca.class_key(ClassId(7)).unwrap());
    let d: ClassKey = get(&app, "/v1/classes/3/derive/c7").await.unwrap();
    assert_eq!(d, k);
    let u: UserKey = get(&app, "/v1/users/702/key").await.unwrap();
    assert_eq!(u, ca.user_key(702).unwrap());

    let listing: KeyListing = get(&app, "/v1/keys").await.unwrap();
    assert_eq!(listing.classes.len(), 9);
    let c7 = listing.classes.iter().find(|c| c.class == ClassId(7)).unwrap();
    assert_eq!(c7.key, k.value);
    assert_eq!(c7.users.iter().find(|e| e.user == 702).unwrap().key, u.value);
}

#[tokio::test]
async fn errors_carry_codes() {
    let app = router(AppState::new(fixtures::nine_class()));
    let (s, e) = get::<ClassKey>(&app, "/v1/classes/C7/derive/C3").await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::FORBIDDEN, "access_denied"));
    let (s, e) = get::<ClassKey>(&app, "/v1/classes/C42/key").await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::NOT_FOUND, "not_found"));
    let (s, e) = get::<ClassKey>(&app, "/v1/classes/X1/key").await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, e) = get::<UserKey>(&app, "/v1/users/999/key").await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::NOT_FOUND, "not_found"));

    let (status, bytes) = call(&app, Method::POST, "/v1/embed", Some(b"{not json".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(e.code, "bad_request");

    let req = InspectRequest { wav: b"RIFX....".to_vec(), class: None };
    let (s, e) = post::<WavInfo>(&app, "/v1/inspect-wav", &req).await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "bad_wav"));
}

#[tokio::test]
async fn access_matrix_over_http() {
    let app = router(AppState::new(fixtures::nine_class()));
    let ca = Authority::new(fixtures::nine_class());
    let h = &ca.config().hierarchy;
    let cover = cover_bytes(16 * 400);
    for intended in h.class_ids() {
        let sealed: EmbedResponse = post(
            &app,
            "/v1/embed",
            &EmbedRequest { class: intended, payload: text(&format!("for {intended}")), cover: cover.clone() },
        )
        .await
        .unwrap();
        assert_eq!(sealed.stego.len(), cover.len());
        for receiver in h.class_ids() {
            let user = u64::from(receiver.0) * 100 + 1;
            let req = ExtractRequest { class: receiver, user, intended: None, stego: sealed.stego.clone() };
            let got = post::<ExtractResponse>(&app, "/v1/extract", &req).await;
            let allowed = receiver == intended || h.is_ancestor(receiver, intended).unwrap();
            match got {
                Ok(r) => {
                    assert!(allowed, "{receiver} opened a message for {intended}");
                    assert_eq!(r.class, intended);
                    assert_eq!(r.payload.body, format!("for {intended}").into_bytes());
                }
                Err((s, e)) => {
                    assert!(!allowed, "{receiver} could not open {intended}: {}", e.error);
                    assert_eq!((s, e.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "no_matching_key"));
                }
            }
            let req = ExtractRequest { intended: Some(intended), ..req };
            let got = post::<ExtractResponse>(&app, "/v1/extract", &req).await;
            match got {
                Ok(_) => assert!(allowed),
                Err((s, e)) => {
                    assert!(!allowed);
                    assert_eq!((s, e.code.as_str()), (StatusCode::FORBIDDEN, "access_denied"));
                }
            }
        }
    }
}

#[tokio::test]
async fn membership_batches_rekey_atomically() {
    let app = router(AppState::new(fixtures::two_class()));
    let before: ClassKey = get(&app, "/v1/classes/C4/key").await.unwrap();
    let cover = cover_bytes(16 * 200);
    let old: EmbedResponse =
        post(&app, "/v1/embed", &EmbedRequest { class: ClassId(4), payload: text("old"), cover: cover.clone() })
            .await
            .unwrap();

    let join = BatchRequest { events: vec![MembershipEvent::JoinUser { class: ClassId(4), user: 45 }] };
    let e: RekeyEntry = post(&app, "/v1/membership", &join).await.unwrap();
    assert_eq!((e.epoch, e.unicast_msgs, e.broadcast_msgs), (0, 2, 1));

    // a batch with one bad event is refused as a whole
    let bad = BatchRequest {
        events: vec![MembershipEvent::LeaveUser { user: 41 }, MembershipEvent::LeaveUser { user: 777 }],
    };
    let (s, e) = post::<RekeyEntry>(&app, "/v1/membership", &bad).await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::CONFLICT, "batch_rejected"));
    let still: ClassKey = get(&app, "/v1/classes/C4/key").await.unwrap();
    assert_eq!(still, before);

    let leave = BatchRequest { events: vec![MembershipEvent::LeaveUser { user: 41 }] };
    let e: RekeyEntry = post(&app, "/v1/membership", &leave).await.unwrap();
    assert_eq!((e.epoch, e.unicast_msgs, e.broadcast_msgs), (1, 0, 1));
    let after: ClassKey = get(&app, "/v1/classes/C4/key").await.unwrap();
    assert_ne!(after.value, before.value);

    // the departed user is gone and the old frame no longer opens
    let req = ExtractRequest { class: ClassId(4), user: 41, intended: None, stego: old.stego.clone() };
    let (s, _) = post::<ExtractResponse>(&app, "/v1/extract", &req).await.unwrap_err();
    assert_eq!(s, StatusCode::FORBIDDEN);
    let req = ExtractRequest { user: 42, ..req };
    let (s, e) = post::<ExtractResponse>(&app, "/v1/extract", &req).await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "no_matching_key"));

    let log: RekeyLog = get(&app, "/v1/rekey-log").await.unwrap();
    assert_eq!(log.events.len(), 2);
    let (status, csv) = call(&app, Method::GET, "/v1/rekey-log/csv", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap(), log.to_csv());
}

#[tokio::test]
async fn peer_messages_need_the_recipient_key() {
    let app = router(AppState::new(fixtures::two_class()));
    let req = PeerMessageRequest { sender_class: ClassId(2), sender: 21, recipient: 22, payload: text("hi 22") };
    let sealed: SealedMessage = post(&app, "/v1/peer-messages", &req).await.unwrap();

    let open = PeerOpenRequest { class: ClassId(2), user: 22, sealed: sealed.sealed.clone() };
    let p: PayloadDto = post(&app, "/v1/peer-messages/open", &open).await.unwrap();
    assert_eq!(p, text("hi 22"));

    let wrong = PeerOpenRequest { user: 23, ..open };
    let (s, e) = post::<PayloadDto>(&app, "/v1/peer-messages/open", &wrong).await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "bad_envelope"));

    let cross = PeerMessageRequest { recipient: 41, ..req };
    let (s, e) = post::<SealedMessage>(&app, "/v1/peer-messages", &cross).await.unwrap_err();
    assert_eq!((s, e.code.as_str()), (StatusCode::FORBIDDEN, "not_permitted"));
}

#[tokio::test]
async fn inspect_reports_geometry() {
    let app = router(AppState::new(fixtures::two_class()));
    let cover = cover_bytes(16 * 100);
    let plain: WavInfo = post(&app, "/v1/inspect-wav", &InspectRequest { wav: cover.clone(), class: None }).await.unwrap();
    assert_eq!((plain.channels, plain.sample_rate, plain.frames, plain.total_frames), (2, 11025, 1600, 100));
    assert!(plain.geometry.is_none());

    let keyed: WavInfo =
        post(&app, "/v1/inspect-wav", &InspectRequest { wav: cover, class: Some(ClassId(2)) }).await.unwrap();
    let g = keyed.geometry.unwrap();
    let k = Authority::new(fixtures::two_class()).class_key(ClassId(2)).unwrap().value;
    assert_eq!(g.start_frame as u64, k % 50);
    assert_eq!(u64::from(g.loc1), k % 4);
}

#[tokio::test]
async fn config_round_trips_as_text() {
    let app = router(AppState::new(fixtures::nine_class()));
    let (status, body) = call(&app, Method::GET, "/v1/config", None).await;
    assert_eq!(status, StatusCode::OK);
    let cfg: stegokey_core::Config = String::from_utf8(body).unwrap().parse().unwrap();
    assert_eq!(cfg, fixtures::nine_class());
}
