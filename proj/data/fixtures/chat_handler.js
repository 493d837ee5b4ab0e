// Chat widget client: text messages and shared files arrive over one socket.
var ws = new WebSocket('wss://' + window.location.host + '/ws/chat');
var messages = document.getElementById('messages');

ws.onmessage = function (event) {
    var data = JSON.parse(event.data);
    var messageDiv = document.createElement('div');
    messageDiv.className = 'message';
    if (data.type === 'message') {
        messageDiv.classList.add('received');
        messageDiv.textContent = data.text;
        messages.appendChild(messageDiv);
        return;
    } else if (data.type === 'file') {
        messageDiv.classList.add('received');
        var link = document.createElement('a');
        link.href = data.url;
        link.className = 'file-link';
        link.target = '_blank';
        link.innerHTML = 'Clip: ' + data.filename;
        messageDiv.appendChild(link);
    }
    messages.appendChild(messageDiv);
    messages.scrollTop = messages.scrollHeight;
};

function sendMessage(text) {
    ws.send(JSON.stringify({ type: 'message', text: text }));
}
