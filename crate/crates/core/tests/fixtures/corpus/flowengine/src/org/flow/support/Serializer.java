package org.flow.support;

public class Serializer {
    private final List<String> encodes = new ArrayList<>();

    public void serializeStream(String bytes) {
        if (bytes == null) {
            return;
        }
        encodes.add(bytes);
    }

    public int encodeCount() {
        return encodes.size();
    }

    public List<String> serializes() {
        List<String> out = new ArrayList<>(encodes);
        Collections.sort(out);
        return out;
    }
}
