"""
Imagery fetch and verdict collection over HTTP
==============================================

Two services bracket the pipeline: an imagery endpoint at the front and the
verification service at the back. This demo runs both locally: a fixture
imagery server stands in for the street-level provider, images get fetched
and cached, a few detection boxes are queued for review, and three scripted
annotators vote over the same JSON API the browser UI uses.
"""

import tempfile
from pathlib import Path
from types import SimpleNamespace

import requests

from camsurvey.fixture_server import FixtureImageryServer
from camsurvey.imagery import ImageryClient
from camsurvey.sampler import sample_points
from camsurvey.synth import generate_city
from camsurvey.verify import VerifyService, VerifyStore

work = Path(tempfile.mkdtemp(prefix="camsurvey-demo-"))
print(f"working under {work}")

# A tiny city and a handful of capture points.
city = generate_city(rows=2, cols=2, spacing=120.0, setback=9.0,
                     camera_density_per_km=0.0, seed=3)
points = sample_points(city.bundle, 6, master_seed=41)

# The fixture endpoint knows one panorama per point, captured mid-range.
panos = [
    {"id": f"pano{i}", "lat": p.lat, "lon": p.lon, "date": f"201{6 + i % 4}-06-01"}
    for i, p in enumerate(points)
]
imagery = FixtureImageryServer(panos).start()

client = ImageryClient(endpoint=imagery.url, cache_dir=work / "cache")
records = client.fetch_many(points, workers=2)
print(f"fetched {len(records)} images into the cache")
print(f"  first: {records[0].image_id} ({records[0].capture_date})")

# cached means cached: a second pass issues no new image requests
before = imagery.request_count("/image")
client.fetch_many(points, workers=2)
print(f"re-fetch hit the endpoint {imagery.request_count('/image') - before} times")

# Queue boxes on the first three images and serve them for review.
detections = [
    SimpleNamespace(image_id=records[0].image_id, bbox=[40, 32, 12, 12]),
    SimpleNamespace(image_id=records[0].image_id, bbox=[200, 48, 10, 14]),
    SimpleNamespace(image_id=records[1].image_id, bbox=[96, 80, 16, 10]),
    SimpleNamespace(image_id=records[2].image_id, bbox=[10, 10, 8, 8]),
]
store = VerifyStore(work / "store", quorum=3)
store.register_images(records)
store.create_tasks(detections)

service = VerifyService(store)
service.start()
print(f"verification service at {service.url}")

# Three annotators drain the queue. The first box on each image is a camera,
# the rest are not; annotator c disagrees on everything and gets outvoted.
votes = {"ann-a": True, "ann-b": True, "ann-c": False}
for name, first_is_camera in votes.items():
    while True:
        task = requests.get(f"{service.url}/api/tasks/next",
                            params={"annotator": name}).json()["task"]
        if task is None:
            break
        decisions = [first_is_camera] + [not first_is_camera] * (len(task["boxes"]) - 1)
        requests.post(f"{service.url}/api/tasks/{task['task_id']}/verdict",
                      json={"annotator": name, "decisions": decisions})

# A repeated verdict is refused, not double-counted.
dup = requests.post(f"{service.url}/api/tasks/{detections[0].image_id}/verdict",
                    json={"annotator": "ann-a", "decisions": [True, True]})
print(f"duplicate verdict -> HTTP {dup.status_code}")

export = requests.get(f"{service.url}/api/export/verified").json()
print(f"verified per city: {export['counts']}")
for d in export["detections"]:
    print(f"  {d['image_id']} box {d['box']}: {d['accepts']}/3 accepts "
          f"-> {'camera' if d['verified'] else 'rejected'}")

service.stop()
store.close()
imagery.shutdown()
