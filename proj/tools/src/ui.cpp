// Copyright 2026 The slgan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal browser front end for the service: one slider per parameter,
// debounced edits, stale responses dropped.

namespace slgan::tools {

extern const char* const kUiPage;
const char* const kUiPage = R"HTML(<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>slgan sliders</title>
<style>
  body { font-family: sans-serif; margin: 1.5em; }
  .row { display: flex; gap: 2em; }
  img { width: 256px; height: 256px; image-rendering: pixelated; border: 1px solid #ccc; }
  label { display: block; font-size: 0.85em; margin-top: 0.4em; }
  input[type=range] { width: 260px; }
</style>
</head>
<body>
<h3>slgan slider editor</h3>
<input type="file" id="file" accept="image/png">
<button id="reset">Reset</button>
<div class="row">
  <div><div>input</div><img id="input" alt=""></div>
  <div><div>output</div><img id="output" alt=""></div>
  <div id="sliders"></div>
</div>
<script>
let info = null, source = null, seq = 0, timer = null;
const sliders = document.getElementById('sliders');

function values() {
  return Array.from(sliders.querySelectorAll('input')).map(s => Number(s.value));
}

function schedule() {
  clearTimeout(timer);
  timer = setTimeout(send, 120);
}

async function send() {
  if (!source) return;
  const id = ++seq;
  const res = await fetch('/edit', {method: 'POST', headers: {'Content-Type': 'application/json'},
    body: JSON.stringify({image: source, params: values(), mode: 'edit'})});
  const body = await res.json();
  if (id !== seq) return;
  if (!res.ok) { alert(body.error); return; }
  document.getElementById('output').src = 'data:image/png;base64,' + body.image;
}

async function regress() {
  const res = await fetch('/regress', {method: 'POST', headers: {'Content-Type': 'application/json'},
    body: JSON.stringify({image: source})});
  const body = await res.json();
  sliders.querySelectorAll('input').forEach((s, k) => { s.value = Math.max(-1, Math.min(1, body.params[k])); });
  schedule();
}

document.getElementById('file').addEventListener('change', ev => {
  const reader = new FileReader();
  reader.onload = () => {
    source = String(reader.result).split(',')[1];
    document.getElementById('input').src = reader.result;
    regress();
  };
  reader.readAsDataURL(ev.target.files[0]);
});

document.getElementById('reset').addEventListener('click', () => source && regress());

fetch('/model/info').then(r => r.json()).then(i => {
  info = i;
  i.labels.forEach((name, k) => {
    const label = document.createElement('label');
    label.textContent = k + ': ' + name;
    const s = document.createElement('input');
    Object.assign(s, {type: 'range', min: -1, max: 1, step: 0.05, value: 0});
    s.addEventListener('input', schedule);
    label.appendChild(document.createElement('br'));
    label.appendChild(s);
    sliders.appendChild(label);
  });
});
</script>
</body>
</html>
)HTML";

}  // namespace slgan::tools
