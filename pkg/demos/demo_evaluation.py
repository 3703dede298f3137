"""
Scoring external predictions
============================

Entity-label F1 for key information extraction and COCO-style AP for region
detection, both computed from predictions produced elsewhere.
"""

import warnings

from roitok import BBox, DetRecord, GoldBox, KieRecord, PredBox, RoiClass, score_detection, score_kie
from roitok.metrics import OUT_OF_DOMAIN

# KIE: each record is one question about a text segment with a gold entity label.
kie = [
    KieRecord("r1", "what is 'TOTAL 12.00'?", "total", "Total", dataset="receipts"),
    KieRecord("r1", "what is '2024-03-01'?", "date", "date", dataset="receipts"),
    KieRecord("r2", "what is 'ACME Ltd'?", "company", "address", dataset="receipts"),
    KieRecord("r2", "what is 'Main St 1'?", "address", "", dataset="receipts"),  # abstained
    KieRecord("f1", "what is 'Name:'?", "question", "question", dataset="forms", domain=OUT_OF_DOMAIN),
    KieRecord("f1", "what is 'J. Doe'?", "answer", "header", dataset="forms", domain=OUT_OF_DOMAIN),
]
rep = score_kie(kie)
print(rep.to_markdown())
print("receipts counts:", rep.row("receipts").counts)

# Detection: two pages, text and vision boxes, scored predictions.
T, V = RoiClass.TEXT, RoiClass.VISION
det = [
    DetRecord("page-1",
              (GoldBox(BBox(0.1, 0.1, 0.9, 0.15), T), GoldBox(BBox(0.1, 0.3, 0.9, 0.8), V)),
              (PredBox(BBox(0.1, 0.1, 0.88, 0.16), T, 0.95), PredBox(BBox(0.12, 0.32, 0.9, 0.75), V, 0.9),
               PredBox(BBox(0.5, 0.85, 0.9, 0.9), T, 0.4))),
    DetRecord("page-2",
              (GoldBox(BBox(0.1, 0.1, 0.5, 0.2), T),),
              (PredBox(BBox(0.1, 0.1, 0.5, 0.3), T, 0.7),)),
]
with warnings.catch_warnings():
    warnings.simplefilter("error")  # every class has gold boxes here
    d = score_detection(det)
print(d.to_markdown())
