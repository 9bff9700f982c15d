package org.flow.support;

public class Cleaner {
    private final List<String> ages = new ArrayList<>();

    public void cleanSweep(String temp) {
        if (temp == null) {
            return;
        }
        ages.add(temp);
    }

    public int ageCount() {
        return ages.size();
    }

    public List<String> cleans() {
        List<String> out = new ArrayList<>(ages);
        Collections.sort(out);
        return out;
    }
}
