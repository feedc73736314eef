import socket
import time

import pytest

from tabletalk import supervisor as sup

TAXONOMY = sup.Taxonomy.load(
    "roloids antacid\ntums antacid\nantacid medication\n"
    "tylenol analgesic\naspirin analgesic\nanalgesic medication\n")
DB = sup.PatientDB.load("aspirin\tBut that will hurt your stomach.\n")


def give_proposal(name, scene, act_id=1):
    return sup.encode_proposal("hand_give", name, 2, scene, act_id, give=True)


class TestEncodeProposal:
    def test_give_has_four_action_triples_plus_scene(self):
        triples = sup.encode_proposal("hand_give", "Tylenol", 2,
                                      ["Tylenol", "Tums"], 1, give=True)
        act = [t for t in triples if t.subject.startswith(("act-", "obj-"))]
        assert len(act) == 4
        assert sup.Triple("act-1", "type", "hand_give") in triples
        assert sup.Triple("act-1", "object", "obj-2") in triples
        assert sup.Triple("obj-2", "name", "Tylenol") in triples
        assert sup.Triple("act-1", "recipient", "user") in triples
        scene = [t for t in triples if t.subject == "scene"]
        assert len(scene) == 2

    def test_arity_zero_action_single_type_triple(self):
        triples = sup.encode_proposal("wave", None, None, [], 3)
        assert sup.Triple("act-3", "type", "wave") in triples
        assert len([t for t in triples if t.predicate == "recipient"]) == 0

    def test_unnamed_object_is_unknown(self):
        triples = sup.encode_proposal("hand_grab", None, 0, [], 2)
        assert sup.Triple("obj-0", "name", "unknown") in triples

    def test_empty_triple_fields_rejected(self):
        with pytest.raises(sup.ProtocolError):
            sup.Triple("a", "", "c")


class TestVet:
    def test_restricted_substance_vetoed(self):
        log = sup.LifeLog()
        v = sup.vet(give_proposal("aspirin", ["aspirin", "Tums"]),
                    DB, log, TAXONOMY, now=0.0)
        assert v.kind == "veto"
        assert v.reason == "But that will hurt your stomach."
        assert log.events == []

    def test_accept_logs_dose(self):
        log = sup.LifeLog()
        v = sup.vet(give_proposal("Tylenol", ["Tylenol", "Tums"]),
                    DB, log, TAXONOMY, now=100.0)
        assert v.kind == "accept"
        assert log.events == [(100.0, "dose", "tylenol")]

    def test_recent_dose_vetoed(self):
        log = sup.LifeLog()
        sup.vet(give_proposal("Tylenol", ["Tylenol"]), DB, log, TAXONOMY, now=0.0)
        v = sup.vet(give_proposal("Tylenol", ["Tylenol"]), DB, log, TAXONOMY,
                    now=600.0)
        assert v.kind == "veto"
        assert v.reason == "You just had Tylenol."
        v2 = sup.vet(give_proposal("Tylenol", ["Tylenol"]), DB, log, TAXONOMY,
                     now=5 * 3600.0)
        assert v2.kind == "accept"

    def test_absent_item_countered_with_taxonomic_kin(self):
        v = sup.vet(give_proposal("Roloids", ["aspirin", "Tylenol", "Tums"]),
                    DB, sup.LifeLog(), TAXONOMY, now=0.0)
        assert v.kind == "counter"
        assert v.alternative == "Tums"
        assert v.reason == "another antacid"

    def test_no_kin_accepts(self):
        v = sup.vet(give_proposal("Roloids", ["aspirin"]),
                    DB, sup.LifeLog(), sup.Taxonomy(), now=0.0)
        assert v.kind == "accept"

    def test_malformed_proposal_is_protocol_error(self):
        with pytest.raises(sup.ProtocolError):
            sup.vet([sup.Triple("a", "b", "c")], DB, sup.LifeLog(), TAXONOMY, 0.0)

    def test_lifelog_monotonic(self):
        log = sup.LifeLog()
        log.append(5.0, "dose", "x")
        with pytest.raises(ValueError):
            log.append(1.0, "dose", "y")


class TestTransport:
    def _server(self, clock=None):
        return sup.SupervisorServer(DB, sup.LifeLog(), TAXONOMY,
                                    clock=clock).start()

    def test_loopback_matches_direct_vet(self):
        fake_now = [0.0]
        server = self._server(clock=lambda: fake_now[0])
        client = sup.SupervisorClient(*server.address)
        try:
            cases = [
                ("aspirin", ["aspirin", "Tums"], "veto"),
                ("Tylenol", ["Tylenol", "Tums"], "accept"),
                ("Roloids", ["aspirin", "Tylenol", "Tums"], "counter"),
                ("Tylenol", ["Tylenol", "Tums"], "veto"),  # recent dose
            ]
            direct_log = sup.LifeLog()
            for i, (name, scene, want) in enumerate(cases, start=1):
                direct = sup.vet(give_proposal(name, scene, i),
                                 DB, direct_log, TAXONOMY, now=fake_now[0])
                via_wire = client.submit(i, give_proposal(name, scene, i))
                assert via_wire == direct
                assert via_wire.kind == want
                fake_now[0] += 60.0
        finally:
            client.close()
            server.stop()

    def test_garbled_frame_gets_error_reply_and_survives(self):
        server = self._server()
        try:
            with socket.create_connection(server.address, timeout=2) as raw:
                raw.sendall(b"GOBBLEDYGOOK\n")
                reply = raw.makefile().readline()
                assert reply.startswith("ERR")
            # server still answers well-formed proposals afterwards
            client = sup.SupervisorClient(*server.address)
            v = client.submit(1, give_proposal("Tylenol", ["Tylenol"]))
            assert v.kind == "accept"
            client.close()
        finally:
            server.stop()

    def test_timeout_engages_fallback(self):
        # connect to a listening socket that never answers
        quiet = socket.socket()
        quiet.bind(("127.0.0.1", 0))
        quiet.listen(1)
        try:
            client = sup.SupervisorClient(*quiet.getsockname(), timeout=0.3)
            v = client.submit(1, give_proposal("Tylenol", ["Tylenol"]))
            assert v == sup.FALLBACK_VERDICT
            assert v.kind == "accept" and "local-only" in v.reason
        finally:
            quiet.close()

    def test_connection_refused_engages_fallback(self):
        client = sup.SupervisorClient("127.0.0.1", 1, timeout=0.3)
        v = client.submit(1, give_proposal("Tylenol", ["Tylenol"]))
        assert v == sup.FALLBACK_VERDICT

    def test_frame_format_round_trip(self):
        triples = give_proposal("Tylenol", ["Tums"])
        frame = sup.format_frame(7, triples)
        lines = frame.splitlines()
        assert lines[0] == "PROPOSE 7"
        assert lines[-1] == "END"
        assert all(l.startswith("T ") for l in lines[1:-1])

    def test_reply_parsing(self):
        assert sup.parse_reply("ACCEPT 3") == (3, sup.Verdict("accept"))
        assert sup.parse_reply("VETO 4 You just had Tylenol.") == \
            (4, sup.Verdict("veto", reason="You just had Tylenol."))
        n, v = sup.parse_reply("COUNTER 5 Tums another antacid")
        assert n == 5 and v.alternative == "Tums" and v.reason == "another antacid"
        with pytest.raises(sup.ProtocolError):
            sup.parse_reply("WHAT 1")
